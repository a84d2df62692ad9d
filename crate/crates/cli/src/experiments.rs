use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vortexlab::energy::{k_alpha_reduced, sigma_alpha_density};
use vortexlab::geodesics::{
    m_alpha_along, ray_k_alpha_profile, ray_slope_limit, second_differences,
    solve_epsilon_geodesic, OnePSRay,
};
use vortexlab::gravity::{
    check_polystability, futaki_closed_form, solve_gravitating, solve_twisted, verify_solution,
    verify_twisted, ContinuityStatus, GravConfig, GravSolution, StabilityWitness, VerifyReport,
};
use vortexlab::higgs::HiggsData;
use vortexlab::linalg::sup_norm;
use vortexlab::surface::sphere::vector_to_chart;
use vortexlab::surface::{write_field, BackgroundGeometry, ScalarField, SurfacePoint};
use vortexlab::vortex::{mhat_energy, solve_vortex, VortexProblem};

use crate::config::{Experiment, RunConfig};

/// Ordered `key = value` lines.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub lines: Vec<(String, String)>,
}

impl Report {
    pub fn text(&mut self, key: &str, value: impl std::fmt::Display) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn num(&mut self, key: &str, value: f64) {
        self.text(key, format!("{value:.16e}"));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.lines
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.lines
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Status {
    Ok,
    /// Continuity stopped short of its target; not an error.
    Stalled(String),
    /// A module contract was checked and failed.
    Violated(String),
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub report: Report,
    /// (file name, contents)
    pub artifacts: Vec<(String, String)>,
    pub status: Status,
}

#[derive(Debug)]
pub struct RunError {
    pub module: &'static str,
    pub error: vortexlab::Error,
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}] {}", self.module, self.error)
    }
}

impl std::error::Error for RunError {}

fn ctx(module: &'static str) -> impl Fn(vortexlab::Error) -> RunError {
    move |error| RunError { module, error }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// ChaCha8 keyed by the seed, one stream per name.
pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(fnv1a(name));
    r
}

pub fn random_field(
    geom: &BackgroundGeometry,
    rng: &mut ChaCha8Rng,
    modes: usize,
    amp: f64,
) -> ScalarField {
    geom.band_limited_field(modes, amp, &mut || rng.gen_range(-1.0..1.0))
}

fn dump(
    geom: &BackgroundGeometry,
    name: &str,
    values: &[f64],
) -> Result<(String, String), RunError> {
    let mut buf = Vec::new();
    write_field(geom, values, &mut buf).map_err(ctx("surface"))?;
    Ok((
        name.to_string(),
        String::from_utf8(buf).expect("field dump is ASCII"),
    ))
}

struct Setup {
    geom: BackgroundGeometry,
    higgs: HiggsData,
}

fn setup(cfg: &RunConfig) -> Result<Setup, RunError> {
    let geom = cfg.geometry().map_err(ctx("surface"))?;
    let higgs = cfg.higgs(&geom).map_err(ctx("higgs"))?;
    Ok(Setup { geom, higgs })
}

fn background(cfg: &RunConfig, geom: &BackgroundGeometry) -> ScalarField {
    let amp = cfg.options.kpot_amplitude;
    if amp == 0.0 {
        return geom.constant(0.0);
    }
    random_field(
        geom,
        &mut stream(cfg.run.seed, "kpot"),
        cfg.options.modes,
        amp,
    )
}

fn status_from(violations: Vec<String>, module: &str) -> Status {
    if violations.is_empty() {
        Status::Ok
    } else {
        Status::Violated(format!("{module} contract: {}", violations.join("; ")))
    }
}

pub fn run_experiment(cfg: &RunConfig, threads: usize) -> Result<Outcome, RunError> {
    match cfg.run.experiment {
        Experiment::SolveVortex => vortex(cfg),
        Experiment::SolveGravitating => gravitating(cfg),
        Experiment::SolveTwisted => twisted(cfg),
        Experiment::RaySlope => ray_slope(cfg, threads),
        Experiment::ConvexityScan => convexity(cfg),
        Experiment::EpsilonGeodesic => epsilon_geodesic(cfg, threads),
        Experiment::Stability => stability(cfg),
        Experiment::EnergyReport => energy(cfg),
    }
}

fn vortex(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let Setup { geom, higgs } = setup(cfg)?;
    let tau = cfg.physics.tau;
    let prob =
        VortexProblem::new(&geom, &higgs, tau, background(cfg, &geom)).map_err(ctx("vortex"))?;
    let sol = solve_vortex(&prob, None).map_err(ctx("vortex"))?;
    let n = higgs.degree() as f64;
    let target = tau * geom.volume - 4.0 * PI * n;
    let grad = prob.density_gradient_energy(&sol.f);
    let mut r = Report::default();
    r.text("newton_iters", sol.iterations());
    r.num("residual_sup", sol.residual_sup);
    r.num("degree_target", target);
    r.num("degree_defect", sol.degree_defect);
    r.num("relative_degree_defect", sol.degree_defect / target);
    r.num("pointwise_max", sol.pointwise_max);
    r.num("density_gradient_energy", grad);
    r.num("density_gradient_bound", 2.0 * PI * tau * tau * n);
    r.num("mhat", mhat_energy(&prob, &sol.f));
    let mut bad = Vec::new();
    if sol.degree_defect > 1e-6 * target {
        bad.push(format!(
            "degree identity off by {:.3e}",
            sol.degree_defect / target
        ));
    }
    if sol.pointwise_max > tau * (1.0 + 1e-8) {
        bad.push(format!("sup |phi|^2 = {} exceeds tau", sol.pointwise_max));
    }
    if grad > 2.0 * PI * tau * tau * n * (1.0 + 1e-6) {
        bad.push("curvature L2 bound fails".into());
    }
    Ok(Outcome {
        report: r,
        artifacts: vec![dump(&geom, "f.field", &sol.f)?],
        status: status_from(bad, "vortex"),
    })
}

fn grav_config<'a>(
    cfg: &RunConfig,
    geom: &'a BackgroundGeometry,
    higgs: &'a HiggsData,
) -> Result<GravConfig<'a>, RunError> {
    let p = &cfg.physics;
    GravConfig::new(geom, higgs, p.tau, p.alpha)
        .and_then(|c| c.with_alpha_step(p.alpha_step, p.min_alpha_step))
        .map_err(ctx("gravity"))
}

fn solution_lines(r: &mut Report, sol: &GravSolution, rep: &VerifyReport) {
    r.num("alpha", sol.alpha);
    r.num("lambda", sol.lambda);
    r.num("c", sol.c);
    r.num("kappa", sol.kappa);
    r.num("res_f", sol.residual_sup.0);
    r.num("res_kpot", sol.residual_sup.1);
    r.num("k_alpha", sol.k_alpha_value);
    for line in rep.report().lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            r.text(k, v);
        }
    }
}

fn gravitating(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let Setup { geom, higgs } = setup(cfg)?;
    let gc = grav_config(cfg, &geom, &higgs)?;
    let mut r = Report::default();
    for w in gc.warnings() {
        r.text("warning", w);
    }
    let out = solve_gravitating(&gc, None).map_err(ctx("gravity"))?;
    let mut artifacts = vec![("trace.csv".to_string(), out.trace.to_csv())];
    r.text("accepted_steps", out.trace.rows.len());
    let mut status = Status::Ok;
    if let Some(sol) = &out.solution {
        let rep =
            verify_solution(&geom, &higgs, sol.alpha, sol.tau, sol).map_err(ctx("gravity"))?;
        solution_lines(&mut r, sol, &rep);
        artifacts.push(dump(&geom, "f.field", &sol.f)?);
        artifacts.push(dump(&geom, "kpot.field", &sol.kpot)?);
        if out.converged() && !rep.passed {
            status = Status::Violated("gravity contract: verify_solution failed".into());
        }
    }
    if let ContinuityStatus::Stalled(s) = &out.status {
        r.num("stalled_at", s.alpha);
        r.num("last_step", s.last_step);
        r.text("stall_reason", &s.reason);
        let fmt = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.6e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        r.text("d1_proxy", fmt(&s.d1_proxy));
        r.text("mean_f", fmt(&s.mean_f));
        status = Status::Stalled(format!(
            "continuity stalled at alpha = {} (target {})",
            s.alpha, s.target
        ));
    }
    Ok(Outcome {
        report: r,
        artifacts,
        status,
    })
}

fn twisted(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let Setup { geom, higgs } = setup(cfg)?;
    let gc = grav_config(cfg, &geom, &higgs)?;
    let out = solve_gravitating(&gc, None).map_err(ctx("gravity"))?;
    if let ContinuityStatus::Stalled(s) = &out.status {
        let mut r = Report::default();
        r.num("stalled_at", s.alpha);
        r.text("stall_reason", &s.reason);
        let status = Status::Stalled(format!(
            "untwisted continuity stalled at alpha = {}",
            s.alpha
        ));
        return Ok(Outcome {
            report: r,
            artifacts: vec![],
            status,
        });
    }
    let base = out.solution.expect("converged");
    let bump = random_field(
        &geom,
        &mut stream(cfg.run.seed, "xi"),
        cfg.options.modes,
        cfg.options.xi_amplitude,
    );
    let shift = geom.mean(&bump);
    let xi: Vec<f64> = bump.iter().map(|b| 1.0 + b - shift).collect();
    let sol = solve_twisted(&gc, &xi, cfg.physics.lambda, Some(&base)).map_err(ctx("gravity"))?;
    let rep =
        verify_twisted(&geom, &higgs, sol.alpha, sol.tau, &xi, &sol).map_err(ctx("gravity"))?;
    let mut r = Report::default();
    solution_lines(&mut r, &sol, &rep);
    let diff = sol
        .kpot
        .iter()
        .zip(&base.kpot)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    r.num("kpot_shift_from_untwisted", diff);
    let artifacts = vec![
        dump(&geom, "xi.field", &xi)?,
        dump(&geom, "f.field", &sol.f)?,
        dump(&geom, "kpot.field", &sol.kpot)?,
    ];
    let status = if rep.passed {
        Status::Ok
    } else {
        Status::Violated("gravity contract: twisted verification failed".into())
    };
    Ok(Outcome {
        report: r,
        artifacts,
        status,
    })
}

fn ray_slope(cfg: &RunConfig, threads: usize) -> Result<Outcome, RunError> {
    let Setup { geom, higgs } = setup(cfg)?;
    let (alpha, tau) = (cfg.physics.alpha, cfg.physics.tau);
    let n = higgs.degree();
    let n1 = higgs
        .divisor
        .multiplicity_at(&geom, &SurfacePoint::Sphere([0.0, 0.0, 1.0]));
    let slope = ray_slope_limit(&geom, &higgs, alpha, tau, threads).map_err(ctx("geodesics"))?;
    let futaki = futaki_closed_form(alpha, tau, n, n1, geom.volume).map_err(ctx("gravity"))?;
    let ray = OnePSRay::for_geometry(&geom, 0.0).map_err(ctx("geodesics"))?;
    let o = &cfg.options;
    let ts: Vec<f64> = (0..=o.profile_steps)
        .map(|k| o.profile_t_max * k as f64 / o.profile_steps as f64)
        .collect();
    let profile = ray_k_alpha_profile(&geom, &higgs, alpha, tau, &ray, &ts, threads)
        .map_err(ctx("geodesics"))?;
    let unit = 2.0 * alpha * tau * (geom.volume - 4.0 * PI * n as f64 / tau);
    let mut r = Report::default();
    r.text("n1", n1);
    r.num("slope_limit", slope);
    r.num("futaki", futaki);
    let ok = if futaki != 0.0 {
        let rel = (slope - futaki).abs() / futaki.abs();
        r.num("relative_error", rel);
        rel <= 0.02
    } else {
        r.num("slope_over_unit", slope.abs() / unit.abs().max(1e-300));
        slope.abs() <= 0.02 * unit.abs()
    };
    r.num("min_second_difference", profile.min_second_difference());
    let status = if ok {
        Status::Ok
    } else {
        Status::Violated("geodesics contract: slope differs from the Futaki value".into())
    };
    Ok(Outcome {
        report: r,
        artifacts: vec![("ray_profile.csv".into(), profile.to_csv())],
        status,
    })
}

fn convexity(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let Setup { geom, higgs } = setup(cfg)?;
    let prob = VortexProblem::new(&geom, &higgs, cfg.physics.tau, background(cfg, &geom))
        .map_err(ctx("vortex"))?;
    let o = &cfg.options;
    let mut rng = stream(cfg.run.seed, "segments");
    let h = 1.0 / (o.samples - 1) as f64;
    let mut csv = String::from("segment,min_second_difference\n");
    let mut worst = f64::INFINITY;
    for k in 0..o.segments {
        let f0 = random_field(&geom, &mut rng, o.modes, o.amplitude);
        let f1 = random_field(&geom, &mut rng, o.modes, o.amplitude);
        let vals: Vec<f64> = (0..o.samples)
            .map(|j| {
                let t = j as f64 * h;
                let f: Vec<f64> = f0
                    .iter()
                    .zip(&f1)
                    .map(|(a, b)| (1.0 - t) * a + t * b)
                    .collect();
                mhat_energy(&prob, &f)
            })
            .collect();
        let m = second_differences(&vals, h)
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        csv.push_str(&format!("{k},{m:.16e}\n"));
        worst = worst.min(m);
    }
    let mut r = Report::default();
    r.text("segments", o.segments);
    r.num("min_second_difference", worst);
    let status = if worst >= 0.0 {
        Status::Ok
    } else {
        Status::Violated("vortex contract: M-hat not convex".into())
    };
    Ok(Outcome {
        report: r,
        artifacts: vec![("convexity.csv".into(), csv)],
        status,
    })
}

fn epsilon_geodesic(cfg: &RunConfig, threads: usize) -> Result<Outcome, RunError> {
    let Setup { geom, higgs } = setup(cfg)?;
    let (alpha, tau, eps) = (cfg.physics.alpha, cfg.physics.tau, cfg.physics.epsilon);
    let ray = OnePSRay::for_geometry(&geom, 0.0).map_err(ctx("geodesics"))?;
    let end = ray
        .potential(&geom, cfg.options.endpoint_t)
        .map_err(ctx("geodesics"))?;
    let start = geom.constant(0.0);
    let path = solve_epsilon_geodesic(&geom, &start, &end, eps, cfg.options.nodes, None)
        .map_err(ctx("geodesics"))?;
    let m = m_alpha_along(&geom, &higgs, alpha, tau, &path.path(), threads)
        .map_err(ctx("geodesics"))?;
    let d2 = second_differences(&m, path.step());
    let bound = -4.0 * PI * alpha * tau * higgs.degree() as f64 * eps;
    let worst = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let mut csv = String::from("t,m_alpha,second_difference\n");
    for (k, t) in path.times.iter().enumerate() {
        let d = if k == 0 || k + 1 == path.times.len() {
            String::new()
        } else {
            format!("{:.16e}", d2[k - 1])
        };
        csv.push_str(&format!("{t:.16e},{:.16e},{d}\n", m[k]));
    }
    let mut r = Report::default();
    r.text("newton_iters", path.newton_iters);
    r.num("residual_sup", path.residual_sup);
    r.num("min_second_difference", worst);
    r.num("bound", bound);
    let status = if worst >= bound - 1e-5 {
        Status::Ok
    } else {
        Status::Violated(
            "geodesics contract: convexity bound along the epsilon-geodesic fails".into(),
        )
    };
    Ok(Outcome {
        report: r,
        artifacts: vec![("epsilon_geodesic.csv".into(), csv)],
        status,
    })
}

fn point_text(p: &SurfacePoint) -> String {
    match p {
        SurfacePoint::Plane([x, y]) => format!("{x} {y}"),
        SurfacePoint::Sphere(v) => match vector_to_chart(*v) {
            Some(z) => format!("{:.12} {:.12}", z.re, z.im),
            None => "inf".into(),
        },
    }
}

fn stability(cfg: &RunConfig) -> Result<Outcome, RunError> {
    if cfg.surface.genus != 0 {
        return Err(RunError {
            module: "gravity",
            error: vortexlab::Error::InvalidInput(
                "polystability is defined for divisors on the sphere".into(),
            ),
        });
    }
    let d = cfg.divisor().map_err(|e| RunError {
        module: "higgs",
        error: vortexlab::Error::Parse(e.0),
    })?;
    let (verdict, witness) = check_polystability(&d);
    let mut r = Report::default();
    r.text("degree", d.degree());
    r.text("max_multiplicity", d.max_multiplicity());
    r.text("verdict", verdict);
    match witness {
        StabilityWitness::None => r.text("witness", "none"),
        StabilityWitness::Point {
            point,
            multiplicity,
        } => r.text(
            "witness",
            format!("{} (multiplicity {multiplicity})", point_text(&point)),
        ),
        StabilityWitness::Pair(p, q) => r.text(
            "witness",
            format!("{} | {}", point_text(&p), point_text(&q)),
        ),
    }
    Ok(Outcome {
        report: r,
        artifacts: vec![],
        status: Status::Ok,
    })
}

fn energy(cfg: &RunConfig) -> Result<Outcome, RunError> {
    let Setup { geom, higgs } = setup(cfg)?;
    let (alpha, tau) = (cfg.physics.alpha, cfg.physics.tau);
    let kpot = background(cfg, &geom);
    let e = k_alpha_reduced(&geom, &higgs, alpha, tau, &kpot).map_err(ctx("energy"))?;
    let sigma = sigma_alpha_density(&geom, &higgs, alpha, tau, &kpot).map_err(ctx("energy"))?;
    let mut r = Report::default();
    for line in e.report().lines() {
        if let Some((k, v)) = line.split_once(" = ") {
            r.text(k, v);
        }
    }
    r.num("entropy", e.entropy);
    r.num("sigma_sup", sup_norm(&sigma));
    Ok(Outcome {
        report: r,
        artifacts: vec![dump(&geom, "kpot.field", &kpot)?],
        status: Status::Ok,
    })
}
