//! Fast consistency checks (well under a minute in release builds).

use std::f64::consts::PI;

use num_complex::Complex64;
use vortexlab::energy::{k_tilde, sigma_pair_density};
use vortexlab::geodesics::{geodesic_residual, OnePSRay};
use vortexlab::gravity::{
    classify_multiplicities, futaki_closed_form, hilbert_mumford_classify, multiplicity_partitions,
    solve_gravitating, verify_solution, GravConfig,
};
use vortexlab::higgs::{build_higgs_green, Divisor, HiggsData};
use vortexlab::surface::BackgroundGeometry;
use vortexlab::vortex::{mhat_energy, solve_vortex, VortexProblem};
use vortexlab::Error;

use crate::config::RunConfig;
use crate::experiments::{random_field, stream};

/// Deliberate defects used to check that the suite catches them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mutation {
    /// iF_{h₀e^{2f}} = iF_{h₀} + 2i∂∂̄f instead of − 2i∂∂̄f.
    FlipCurvatureSign,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub fn render(results: &[CheckResult]) -> String {
    let mut s = format!("vortexlab {} selftest\n", crate::VERSION);
    for r in results {
        s.push_str(&format!(
            "{} {}: {}\n",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        ));
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    s.push_str(&format!("{} checks, {} failed\n", results.len(), failed));
    s
}

fn torus(v: f64, n: usize) -> BackgroundGeometry {
    BackgroundGeometry::build_torus(Complex64::new(0.0, 1.0), v, n).expect("torus")
}

fn one_point(g: &BackgroundGeometry) -> HiggsData {
    build_higgs_green(g, &Divisor::on_plane(&[([0.7, 1.3], 1)]).expect("divisor")).expect("higgs")
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String), Error>) -> CheckResult {
    match f() {
        Ok((passed, detail)) => CheckResult {
            name,
            passed,
            detail,
        },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

pub fn run(seed: u64, mutation: Option<Mutation>) -> Vec<CheckResult> {
    let mut out = Vec::new();

    let g = torus(30.0, 64);
    let h = one_point(&g);
    out.push(check("degree-identity", || {
        let p = VortexProblem::flat(&g, &h, 1.0)?;
        let s = solve_vortex(&p, None)?;
        let rel = s.degree_defect / (30.0 - 4.0 * PI);
        Ok((rel <= 1e-6, format!("relative defect {rel:.3e}")))
    }));
    out.push(check("pointwise-bound", || {
        let p = VortexProblem::flat(&g, &h, 1.0)?;
        let s = solve_vortex(&p, None)?;
        Ok((
            s.pointwise_max <= 1.0 + 1e-8,
            format!("sup |phi|^2 = {:.12}", s.pointwise_max),
        ))
    }));
    out.push(check("bradlow-obstruction", || {
        let g10 = torus(10.0, 32);
        let h10 = one_point(&g10);
        let r = solve_vortex(&VortexProblem::flat(&g10, &h10, 1.0)?, None);
        Ok((
            matches!(r, Err(Error::BradlowViolated { .. })),
            "V = 10, tau = 1, N = 1".into(),
        ))
    }));

    let gs = torus(30.0, 32);
    let hs = one_point(&gs);
    out.push(check("mhat-convexity", || {
        let p = VortexProblem::flat(&gs, &hs, 1.0)?;
        let mut rng = stream(seed, "selftest-segments");
        let mut worst = f64::INFINITY;
        for _ in 0..10 {
            let f0 = random_field(&gs, &mut rng, 3, 1.0);
            let f1 = random_field(&gs, &mut rng, 3, 1.0);
            let v: Vec<f64> = (0..5)
                .map(|j| {
                    let t = j as f64 / 4.0;
                    let f: Vec<f64> = f0
                        .iter()
                        .zip(&f1)
                        .map(|(a, b)| (1.0 - t) * a + t * b)
                        .collect();
                    mhat_energy(&p, &f)
                })
                .collect();
            for w in v.windows(3) {
                worst = worst.min(w[2] - 2.0 * w[1] + w[0]);
            }
        }
        Ok((worst > 0.0, format!("min second difference {worst:.3e}")))
    }));
    out.push(check("gradient-consistency", || {
        let p = VortexProblem::flat(&gs, &hs, 1.0)?;
        let mut rng = stream(seed, "selftest-gradient");
        let f = random_field(&gs, &mut rng, 3, 0.5);
        // ΛiF_h from the curvature transformation, possibly mutated
        let curv = match mutation {
            None => p.curvature(&f),
            Some(Mutation::FlipCurvatureSign) => {
                p.curvature(&f.iter().map(|v| -v).collect::<Vec<_>>())
            }
        };
        let w = p.conformal_factor();
        let dens = p.density(&f);
        let g: Vec<f64> = (0..f.len())
            .map(|i| w[i] * (curv[i] + 0.5 * (dens[i] - 1.0)))
            .collect();
        let mut worst = 0.0_f64;
        for _ in 0..5 {
            let d = random_field(&gs, &mut rng, 3, 1.0);
            let hstep = 1e-4;
            let fp: Vec<f64> = f.iter().zip(&d).map(|(a, b)| a + hstep * b).collect();
            let fm: Vec<f64> = f.iter().zip(&d).map(|(a, b)| a - hstep * b).collect();
            let fd = (mhat_energy(&p, &fp) - mhat_energy(&p, &fm)) / (2.0 * hstep);
            let an = gs.inner(&d, &g);
            worst = worst.max((fd - an).abs() / (fd.abs() + an.abs()).max(1e-12));
        }
        Ok((worst <= 1e-6, format!("max relative error {worst:.3e}")))
    }));
    out.push(check("k-alpha-gradient", || {
        let mut rng = stream(seed, "selftest-kalpha");
        let f = random_field(&gs, &mut rng, 3, 0.3);
        let k = random_field(&gs, &mut rng, 2, 0.1);
        let sigma = sigma_pair_density(&gs, &hs, 0.3, 1.0, &f, &k)?;
        let mut worst = 0.0_f64;
        for _ in 0..5 {
            let d = random_field(&gs, &mut rng, 3, 1.0);
            let hstep = 1e-4;
            let kp: Vec<f64> = k.iter().zip(&d).map(|(a, b)| a + hstep * b).collect();
            let km: Vec<f64> = k.iter().zip(&d).map(|(a, b)| a - hstep * b).collect();
            let fd = (k_tilde(&gs, &hs, 0.3, 1.0, &f, &kp)?
                - k_tilde(&gs, &hs, 0.3, 1.0, &f, &km)?)
                / (2.0 * hstep);
            let an = gs.inner(&d, &sigma);
            worst = worst.max((fd - an).abs() / (fd.abs() + an.abs()).max(1e-12));
        }
        Ok((worst <= 1e-6, format!("max relative error {worst:.3e}")))
    }));
    out.push(check("futaki-closed-form", || {
        let v = futaki_closed_form(0.05, 1.0, 3, 1, 50.0)?;
        Ok((
            (v - 0.1 * (50.0 - 12.0 * PI)).abs() < 1e-12,
            format!("{v:.6}"),
        ))
    }));
    out.push(check("stability-classifier", || {
        let mut count = 0;
        let mut bad = 0;
        for n in 1..=8 {
            for p in multiplicity_partitions(n) {
                count += 1;
                if classify_multiplicities(&p).0 != hilbert_mumford_classify(&p) {
                    bad += 1;
                }
            }
        }
        Ok((bad == 0, format!("{count} partitions, {bad} disagreements")))
    }));
    out.push(check("fs-geodesic-residual", || {
        let sphere = BackgroundGeometry::build_sphere(50.0, 32)?;
        let ray = OnePSRay::for_geometry(&sphere, 0.0)?;
        let dt = 1e-3;
        let at = |t: f64| ray.potential(&sphere, t);
        let r = geodesic_residual(&sphere, &at(0.3 - dt)?, &at(0.3)?, &at(0.3 + dt)?, dt)?;
        Ok((r <= 1e-5 * 50.0, format!("residual {r:.3e}")))
    }));
    out.push(check("gravitating-torus", || {
        let cfg = GravConfig::new(&gs, &hs, 1.0, 0.3)?;
        let (sol, _) = solve_gravitating(&cfg, None)?.into_result()?;
        let rep = verify_solution(&gs, &hs, 0.3, 1.0, &sol)?;
        Ok((
            rep.passed,
            format!(
                "scalar spread {:.3e}, vortex residual {:.3e}",
                rep.scalar_spread, rep.vortex_residual
            ),
        ))
    }));
    out.push(check("determinism", || {
        let text = format!(
            "[run]\nexperiment = \"solve-vortex\"\nseed = {seed}\n[surface]\ngenus = 1\nvolume = 30.0\nresolution = 32\n\
             [divisor]\npoints = [\"0.7 1.3 1\"]\n[options]\nkpot_amplitude = 0.1\n"
        );
        let cfg = RunConfig::parse(&text).map_err(|e| Error::InvalidInput(e.0))?;
        let a = crate::render(&cfg, 1);
        let b = crate::render(&cfg, 0);
        Ok((a.0 == b.0 && a.1 == b.1 && a.2 == 0, "two runs, 1 and all threads".into()))
    }));
    out
}
