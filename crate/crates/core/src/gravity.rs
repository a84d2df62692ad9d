//! The gravitating vortex system, its rewritten form on the background
//! metric, and a continuity method in the coupling constant α.
//!
//! With P = |φ|²_h, h = h₀e^{2f}, ω = ω₀ + i∂∂̄φ and
//! E = exp(4ατf − 2αP − 2cφ + κ), the solver works with
//!
//!   Δ₀f + ½(P − τ)E + 2πN/V = 0,   Δ₀φ + E − 1 = 0,
//!
//! where κ is a normalization constant carried as an extra unknown so that
//! the degenerate case c = 0 needs no special treatment. Whenever c ≠ 0 the
//! returned potential is shifted so that κ = 0.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::energy::{am_functional, constant_c, k_tilde, m_alpha_pair, sigma_pair_density};
use crate::error::{Error, Result};
use crate::higgs::{Divisor, HiggsData};
use crate::linalg::{gmres, sup_norm};
use crate::surface::{BackgroundGeometry, ScalarField, SurfacePoint};
use crate::vortex::{solve_vortex, VortexProblem};

pub const DEFAULT_ALPHA_STEP: f64 = 0.05;
pub const MIN_ALPHA_STEP: f64 = 1e-4;
/// Sup-norm tolerance on both equations for an accepted solution.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Tolerances of [`verify_solution`].
pub const VERIFY_TOL: f64 = 1e-6;
pub const VERIFY_MEAN_TOL: f64 = 1e-8;

const MAX_NEWTON: usize = 40;
const GMRES_RESTART: usize = 60;
const GMRES_MAX_ITER: usize = 1200;
/// Largest boost rapidity tried when balancing a divisor on the sphere.
const MAX_BOOST: f64 = 4.0;

#[derive(Clone, Debug)]
pub struct GravConfig<'a> {
    pub geom: &'a BackgroundGeometry,
    pub higgs: &'a HiggsData,
    pub tau: f64,
    pub alpha: f64,
    pub alpha_step: f64,
    pub min_alpha_step: f64,
}

/// The three numerical conditions of the genus ≥ 1 existence theorem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExistenceConditions {
    /// V − 4πN/τ > 0.
    pub volume: bool,
    /// ατ(8πN/τ − V) < ((2g − 2)/N)(V − 4πN/τ).
    pub coupling: bool,
    /// 2ατm < 1, m the largest multiplicity.
    pub multiplicity: bool,
}

impl ExistenceConditions {
    pub fn all(&self) -> bool {
        self.volume && self.coupling && self.multiplicity
    }
}

impl<'a> GravConfig<'a> {
    pub fn new(
        geom: &'a BackgroundGeometry,
        higgs: &'a HiggsData,
        tau: f64,
        alpha: f64,
    ) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidInput(format!("tau = {tau} must be positive")));
        }
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!(
                "alpha = {alpha} must be nonnegative"
            )));
        }
        if higgs.u0.len() != geom.len() {
            return Err(Error::InvalidInput(
                "Higgs data belongs to a different grid".into(),
            ));
        }
        let n = higgs.degree() as f64;
        if tau * geom.volume <= 4.0 * PI * n {
            return Err(Error::BradlowViolated {
                tau_volume: tau * geom.volume,
                bound: 4.0 * PI * n,
            });
        }
        Ok(Self {
            geom,
            higgs,
            tau,
            alpha,
            alpha_step: DEFAULT_ALPHA_STEP,
            min_alpha_step: MIN_ALPHA_STEP,
        })
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let mut c = Self::new(self.geom, self.higgs, self.tau, alpha)?;
        c.alpha_step = self.alpha_step;
        c.min_alpha_step = self.min_alpha_step;
        Ok(c)
    }

    pub fn with_alpha_step(mut self, step: f64, min_step: f64) -> Result<Self> {
        if !(step > 0.0 && min_step > 0.0 && min_step <= step) {
            return Err(Error::InvalidInput(format!(
                "bad continuity schedule: step {step}, floor {min_step}"
            )));
        }
        self.alpha_step = step;
        self.min_alpha_step = min_step;
        Ok(self)
    }

    pub fn c(&self) -> f64 {
        constant_c(
            self.geom.genus,
            self.alpha,
            self.tau,
            self.higgs.degree(),
            self.geom.volume,
        )
    }

    pub fn conditions(&self) -> ExistenceConditions {
        let n = self.higgs.degree() as f64;
        let v = self.geom.volume;
        let (a, t) = (self.alpha, self.tau);
        let g = self.geom.genus as f64;
        let margin = v - 4.0 * PI * n / t;
        ExistenceConditions {
            volume: margin > 0.0,
            coupling: a * t * (8.0 * PI * n / t - v) < (2.0 * g - 2.0) / n * margin,
            multiplicity: 2.0 * a * t * (self.higgs.divisor.max_multiplicity() as f64) < 1.0,
        }
    }

    /// Human-readable notes on violated existence conditions (empty when all hold).
    pub fn warnings(&self) -> Vec<String> {
        let c = self.conditions();
        let mut out = Vec::new();
        if self.geom.genus == 0 {
            out.push("genus 0: existence depends on polystability of the divisor".to_string());
            return out;
        }
        if !c.coupling {
            out.push(format!(
                "coupling condition fails: alpha*tau*(8*pi*N/tau - V) >= ((2g-2)/N)(V - 4*pi*N/tau) at alpha = {}",
                self.alpha
            ));
        }
        if !c.multiplicity {
            out.push(format!(
                "multiplicity condition fails: 2*alpha*tau*m >= 1 at alpha = {}",
                self.alpha
            ));
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct GravSolution {
    pub alpha: f64,
    pub tau: f64,
    /// Twisting constant, zero for the untwisted system.
    pub lambda: f64,
    pub f: ScalarField,
    pub kpot: ScalarField,
    /// Normalization constant in the exponent; zero whenever c ≠ λ.
    pub kappa: f64,
    pub c: f64,
    /// Sup-norm residuals of the f- and φ-equations.
    pub residual_sup: (f64, f64),
    /// K̃_α(f, φ) at the solution.
    pub k_alpha_value: f64,
    pub newton_iters: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub alpha: f64,
    pub newton_iters: usize,
    pub res_f: f64,
    pub res_kpot: f64,
    pub k_alpha: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContinuityTrace {
    pub rows: Vec<TraceRow>,
}

impl ContinuityTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,newton_iters,res_f,res_kpot,k_alpha\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:.17e},{},{:.6e},{:.6e},{:.17e}",
                r.alpha, r.newton_iters, r.res_f, r.res_kpot, r.k_alpha
            );
        }
        s
    }
}

/// Why a continuity run stopped short of its target.
#[derive(Clone, Debug, PartialEq)]
pub struct StallReport {
    pub alpha: f64,
    pub target: f64,
    pub last_step: f64,
    /// ∫|φ − AM(φ)|ω₀ at each accepted α, a proxy for the d₁ distance to 0.
    pub d1_proxy: Vec<f64>,
    /// Mean of f at each accepted α.
    pub mean_f: Vec<f64>,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ContinuityStatus {
    Converged,
    Stalled(StallReport),
}

#[derive(Clone, Debug)]
pub struct ContinuityOutcome {
    /// Last accepted solution (at the target α when converged).
    pub solution: Option<GravSolution>,
    pub trace: ContinuityTrace,
    pub status: ContinuityStatus,
}

impl ContinuityOutcome {
    pub fn converged(&self) -> bool {
        self.status == ContinuityStatus::Converged
    }

    /// The solution at the target, or `ContinuityStalled`.
    pub fn into_result(self) -> Result<(GravSolution, ContinuityTrace)> {
        match self.status {
            ContinuityStatus::Converged => Ok((
                self.solution.expect("converged run has a solution"),
                self.trace,
            )),
            ContinuityStatus::Stalled(s) => Err(Error::ContinuityStalled {
                alpha: s.alpha,
                target: s.target,
            }),
        }
    }
}

/// The rewritten system at fixed (α, λ) in the gauge mean(φ) = 0.
struct System<'a> {
    geom: &'a BackgroundGeometry,
    higgs: &'a HiggsData,
    alpha: f64,
    tau: f64,
    /// c − λ.
    c_eff: f64,
    /// 2λχ_ξ added to the exponent.
    source: Option<ScalarField>,
}

struct Eval {
    r1: ScalarField,
    r2: ScalarField,
    r3: f64,
    e: ScalarField,
    p: ScalarField,
}

impl Eval {
    fn sup(&self) -> (f64, f64) {
        (sup_norm(&self.r1), sup_norm(&self.r2))
    }
}

impl<'a> System<'a> {
    fn n(&self) -> usize {
        self.geom.len()
    }

    fn exponent(&self, f: &[f64], p: &[f64], phi: &[f64], kappa: f64) -> ScalarField {
        let (a, t, c) = (self.alpha, self.tau, self.c_eff);
        (0..f.len())
            .map(|i| {
                let s = self.source.as_ref().map_or(0.0, |s| s[i]);
                4.0 * a * t * f[i] - 2.0 * a * p[i] - 2.0 * c * phi[i] + kappa + s
            })
            .collect()
    }

    fn eval(&self, x: &[f64]) -> Eval {
        let n = self.n();
        let (f, phi, kappa) = (&x[..n], &x[n..2 * n], x[2 * n]);
        let p: ScalarField = self
            .higgs
            .p0
            .iter()
            .zip(f)
            .map(|(p, f)| p * (2.0 * f).exp())
            .collect();
        let e: ScalarField = self
            .exponent(f, &p, phi, kappa)
            .iter()
            .map(|v| v.exp())
            .collect();
        let lf = self.geom.laplacian(f);
        let lp = self.geom.laplacian(phi);
        let cd = self.higgs.curvature_density;
        let r1: ScalarField = (0..n)
            .map(|i| lf[i] + 0.5 * (p[i] - self.tau) * e[i] + cd)
            .collect();
        let r2: ScalarField = (0..n).map(|i| lp[i] + e[i] - 1.0).collect();
        Eval {
            r1: self.geom.project(&r1),
            r2: self.geom.project(&r2),
            r3: self.geom.mean(phi),
            e,
            p,
        }
    }

    fn pack(ev: &Eval) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * ev.r1.len() + 1);
        v.extend_from_slice(&ev.r1);
        v.extend_from_slice(&ev.r2);
        v.push(ev.r3);
        v
    }

    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let n = self.n();
        self.geom.inner(&a[..n], &b[..n])
            + self.geom.inner(&a[n..2 * n], &b[n..2 * n])
            + self.geom.volume * a[2 * n] * b[2 * n]
    }

    fn jacobian(&self, ev: &Eval, d: &[f64]) -> Vec<f64> {
        let n = self.n();
        let (a, t, c) = (self.alpha, self.tau, self.c_eff);
        let (df, dp, dk) = (&d[..n], &d[n..2 * n], d[2 * n]);
        let de: Vec<f64> = (0..n)
            .map(|i| ev.e[i] * ((4.0 * a * t - 4.0 * a * ev.p[i]) * df[i] - 2.0 * c * dp[i] + dk))
            .collect();
        let lf = self.geom.laplacian(df);
        let lp = self.geom.laplacian(dp);
        let j1: Vec<f64> = (0..n)
            .map(|i| lf[i] + ev.p[i] * ev.e[i] * df[i] + 0.5 * (ev.p[i] - t) * de[i])
            .collect();
        let j2: Vec<f64> = (0..n).map(|i| lp[i] + de[i]).collect();
        let mut out = self.geom.project(&j1);
        out.extend(self.geom.project(&j2));
        out.push(self.geom.mean(dp));
        out
    }

    /// Block-diagonal spectral preconditioner; the mean of the second
    /// equation is steered by κ, the mean of φ by the gauge row.
    fn precondition(&self, ev: &Eval, r: &[f64]) -> Vec<f64> {
        let n = self.n();
        let (a, t) = (self.alpha, self.tau);
        let pe: Vec<f64> = (0..n).map(|i| ev.p[i] * ev.e[i]).collect();
        let diag: Vec<f64> = (0..n)
            .map(|i| pe[i] - 2.0 * a * (t - ev.p[i]).powi(2) * ev.e[i])
            .collect();
        let shift_f = self
            .geom
            .mean(&diag)
            .max(0.1 * self.geom.mean(&pe))
            .max(1e-12);
        let ebar = self.geom.mean(&ev.e);
        let shift_p = (2.0 * self.c_eff).abs() * ebar;
        let mut out = self.geom.apply_multiplier(&r[..n], |l| 1.0 / (l + shift_f));
        let m2 = self.geom.mean(&r[n..2 * n]);
        let dp = self.geom.apply_multiplier(&r[n..2 * n], |l| {
            if l > 1e-12 {
                1.0 / (l + shift_p)
            } else {
                0.0
            }
        });
        out.extend(dp.iter().map(|v| v + r[2 * n]));
        out.push(m2 / ebar);
        out
    }
}

struct NewtonResult {
    x: Vec<f64>,
    iters: usize,
    sup: (f64, f64),
}

fn newton(sys: &System, mut x: Vec<f64>) -> Result<NewtonResult> {
    let mut ev = sys.eval(&x);
    let mut merit = {
        let r = System::pack(&ev);
        sys.inner(&r, &r)
    };
    let mut iters = 0;
    let stop = 1e-3 * RESIDUAL_TOL;
    loop {
        let (s1, s2) = ev.sup();
        let res = s1.max(s2);
        if !res.is_finite() {
            return Err(Error::SolverFailed {
                solver: "gravitating Newton",
                iterations: iters,
                residual: res,
            });
        }
        if res <= stop {
            break;
        }
        if iters == MAX_NEWTON {
            if res <= RESIDUAL_TOL {
                break;
            }
            return Err(Error::SolverFailed {
                solver: "gravitating Newton",
                iterations: iters,
                residual: res,
            });
        }
        iters += 1;
        let rhs: Vec<f64> = System::pack(&ev).iter().map(|v| -v).collect();
        let mut step = vec![0.0; rhs.len()];
        let eta = (0.1 * res).clamp(1e-12, 1e-3);
        let st = gmres(
            |d| sys.jacobian(&ev, d),
            |r| sys.precondition(&ev, r),
            |a, b| sys.inner(a, b),
            &rhs,
            &mut step,
            eta,
            GMRES_RESTART,
            GMRES_MAX_ITER,
        );
        if !(st.relative_residual < 0.5) {
            return Err(Error::SolverFailed {
                solver: "gravitating GMRES",
                iterations: st.iterations,
                residual: st.relative_residual,
            });
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            let tev = sys.eval(&trial);
            let r = System::pack(&tev);
            let m = sys.inner(&r, &r);
            if m.is_finite() && m <= (1.0 - 1e-4 * t) * merit {
                accepted = Some((trial, tev, m));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, tev, m)) => {
                x = trial;
                ev = tev;
                merit = m;
            }
            None if res <= RESIDUAL_TOL => break,
            None => {
                return Err(Error::SolverFailed {
                    solver: "gravitating line search",
                    iterations: iters,
                    residual: res,
                });
            }
        }
    }
    let sup = ev.sup();
    Ok(NewtonResult { x, iters, sup })
}

fn twist_source(geom: &BackgroundGeometry, xi: &[f64], lambda: f64) -> Result<Option<ScalarField>> {
    if lambda == 0.0 {
        return Ok(None);
    }
    let rhs: Vec<f64> = xi.iter().map(|x| x - 1.0).collect();
    let chi = geom.poisson_solve(&rhs)?;
    Ok(Some(chi.iter().map(|v| 2.0 * lambda * v).collect()))
}

/// Pack (f, φ, κ) into the solver gauge mean(φ) = 0.
fn to_solver_gauge(
    geom: &BackgroundGeometry,
    c_eff: f64,
    f: &[f64],
    kpot: &[f64],
    kappa: f64,
) -> Vec<f64> {
    let m = geom.mean(kpot);
    let mut x = f.to_vec();
    x.extend(kpot.iter().map(|v| v - m));
    x.push(kappa - 2.0 * c_eff * m);
    x
}

/// Unpack to the reporting gauge: κ = 0 if c ≠ λ, otherwise AM(φ) = 0.
fn from_solver_gauge(
    geom: &BackgroundGeometry,
    c_eff: f64,
    x: &[f64],
) -> (ScalarField, ScalarField, f64) {
    let n = geom.len();
    let f = x[..n].to_vec();
    let phi = &x[n..2 * n];
    let kappa = x[2 * n];
    if c_eff.abs() > 1e-8 {
        let s = kappa / (2.0 * c_eff);
        (f, phi.iter().map(|v| v - s).collect(), 0.0)
    } else {
        let s = -am_functional(geom, phi);
        (
            f,
            phi.iter().map(|v| v + s).collect(),
            kappa + 2.0 * c_eff * s,
        )
    }
}

fn make_solution(
    cfg: &GravConfig,
    sys: &System,
    lambda: f64,
    nr: NewtonResult,
) -> Result<GravSolution> {
    let (f, kpot, kappa) = from_solver_gauge(cfg.geom, sys.c_eff, &nr.x);
    let c = cfg.c();
    let k_alpha_value = k_tilde(cfg.geom, cfg.higgs, cfg.alpha, cfg.tau, &f, &kpot)?;
    Ok(GravSolution {
        alpha: cfg.alpha,
        tau: cfg.tau,
        lambda,
        f,
        kpot,
        kappa,
        c,
        residual_sup: nr.sup,
        k_alpha_value,
        newton_iters: nr.iters,
    })
}

fn system<'a>(cfg: &GravConfig<'a>, lambda: f64, source: Option<ScalarField>) -> System<'a> {
    System {
        geom: cfg.geom,
        higgs: cfg.higgs,
        alpha: cfg.alpha,
        tau: cfg.tau,
        c_eff: cfg.c() - lambda,
        source,
    }
}

/// Residual densities of the rewritten system with κ = 0.
pub fn coupled_residual(
    cfg: &GravConfig,
    f: &[f64],
    kpot: &[f64],
) -> Result<(ScalarField, ScalarField)> {
    coupled_residual_gauged(cfg, f, kpot, 0.0)
}

/// Residual densities with an explicit normalization constant κ in the exponent.
pub fn coupled_residual_gauged(
    cfg: &GravConfig,
    f: &[f64],
    kpot: &[f64],
    kappa: f64,
) -> Result<(ScalarField, ScalarField)> {
    cfg.geom.check(f)?;
    cfg.geom.check(kpot)?;
    let sys = system(cfg, 0.0, None);
    let mut x = f.to_vec();
    x.extend_from_slice(kpot);
    x.push(kappa);
    let ev = sys.eval(&x);
    Ok((ev.r1, ev.r2))
}

/// Potential of the Möbius boost with rapidity vector β: its metric is the
/// round metric pulled back by the boost.
pub fn boost_potential(geom: &BackgroundGeometry, beta: [f64; 3]) -> Result<ScalarField> {
    if geom.sphere().is_none() {
        return Err(Error::InvalidGeometry(
            "boosts act on the sphere only".into(),
        ));
    }
    let s = (beta[0] * beta[0] + beta[1] * beta[1] + beta[2] * beta[2]).sqrt();
    let k = geom.volume / (4.0 * PI);
    Ok((0..geom.len())
        .map(|i| {
            let SurfacePoint::Sphere(x) = geom.node_point(i) else {
                unreachable!()
            };
            if s < 1e-300 {
                return 0.0;
            }
            let bx = (beta[0] * x[0] + beta[1] * x[1] + beta[2] * x[2]) / s;
            k * (s.cosh() - s.sinh() * bx).ln()
        })
        .collect())
}

/// Balanced round metric for a divisor on the sphere: the minimizer of the
/// coupling term of K_α over the Möbius orbit of ω₀. Returns the rapidity
/// vector, its potential and the vortex solution there.
pub fn balanced_round_start(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    tau: f64,
) -> Result<([f64; 3], ScalarField, ScalarField)> {
    let eval =
        |beta: [f64; 3], f0: Option<&[f64]>| -> Result<(f64, [f64; 3], ScalarField, ScalarField)> {
            let kpot = boost_potential(geom, beta)?;
            let prob = VortexProblem::new(geom, higgs, tau, kpot.clone())?;
            let f = solve_vortex(&prob, f0)?.f;
            let m = m_alpha_pair(geom, higgs, 1.0, tau, &f, &kpot);
            let sigma = sigma_pair_density(geom, higgs, 1.0, tau, &f, &kpot)?;
            let mut g = [0.0; 3];
            let h = 1e-5;
            for (e, ge) in g.iter_mut().enumerate() {
                let mut bp = beta;
                let mut bm = beta;
                bp[e] += h;
                bm[e] -= h;
                let kp = boost_potential(geom, bp)?;
                let km = boost_potential(geom, bm)?;
                let d: Vec<f64> = kp
                    .iter()
                    .zip(&km)
                    .map(|(a, b)| (a - b) / (2.0 * h))
                    .collect();
                *ge = geom.inner(&d, &sigma);
            }
            Ok((m, g, kpot, f))
        };
    let gnorm = |g: &[f64; 3]| (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
    let diverged = |iter: usize, b: [f64; 3]| Error::SolverFailed {
        solver: "balancing (boost rapidity diverges)",
        iterations: iter,
        residual: gnorm(&b),
    };
    let scale = tau * geom.volume;
    let mut beta = [0.0; 3];
    let (mut m, mut g, mut kpot, mut f) = eval(beta, None)?;
    for iter in 0..60 {
        if gnorm(&g) <= 1e-9 * scale {
            return Ok((beta, kpot, f));
        }
        // Hessian by differences of gradients
        let h = 1e-4;
        let mut hess = nalgebra::Matrix3::zeros();
        for e in 0..3 {
            let mut bp = beta;
            bp[e] += h;
            let Ok((_, gp, _, _)) = eval(bp, Some(&f)) else {
                return Err(diverged(iter, beta));
            };
            for r in 0..3 {
                hess[(r, e)] = (gp[r] - g[r]) / h;
            }
        }
        let hess = 0.5 * (hess + hess.transpose());
        let gv = nalgebra::Vector3::new(g[0], g[1], g[2]);
        let mut dir = match hess.cholesky() {
            Some(ch) => -ch.solve(&gv),
            None => -gv / scale,
        };
        if dir.norm() > 0.5 {
            dir *= 0.5 / dir.norm();
        }
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..20 {
            let trial = [
                beta[0] + t * dir[0],
                beta[1] + t * dir[1],
                beta[2] + t * dir[2],
            ];
            if let Ok(r) = eval(trial, Some(&f)) {
                if r.0 < m || gnorm(&r.1) < 0.5 * gnorm(&g) {
                    next = Some((trial, r));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((b, r)) = next else {
            return Err(diverged(iter, beta));
        };
        beta = b;
        (m, g, kpot, f) = r;
        if gnorm(&beta) > MAX_BOOST {
            return Err(diverged(iter, beta));
        }
    }
    Err(Error::SolverFailed {
        solver: "balancing",
        iterations: 60,
        residual: gnorm(&g),
    })
}

/// A solution of the α = 0 system: vortex on a constant-curvature metric.
fn decoupled_start(cfg: &GravConfig) -> Result<(ScalarField, ScalarField)> {
    let geom = cfg.geom;
    if geom.genus == 0 {
        let (_, kpot, f) = balanced_round_start(geom, cfg.higgs, cfg.tau)?;
        Ok((f, kpot))
    } else {
        let prob = VortexProblem::flat(geom, cfg.higgs, cfg.tau)?;
        Ok((solve_vortex(&prob, None)?.f, geom.constant(0.0)))
    }
}

fn d1_proxy(geom: &BackgroundGeometry, kpot: &[f64]) -> f64 {
    let am = am_functional(geom, kpot);
    let g: Vec<f64> = kpot.iter().map(|v| v - am).collect();
    let one = geom.constant(1.0);
    geom.integrate_abs(&g, &one)
}

fn trace_row(s: &GravSolution) -> TraceRow {
    TraceRow {
        alpha: s.alpha,
        newton_iters: s.newton_iters,
        res_f: s.residual_sup.0,
        res_kpot: s.residual_sup.1,
        k_alpha: s.k_alpha_value,
    }
}

/// Newton at the configured α from (f, φ) in the reporting gauge with constant κ.
pub fn solve_at(cfg: &GravConfig, f: &[f64], kpot: &[f64], kappa: f64) -> Result<GravSolution> {
    cfg.geom.check(f)?;
    cfg.geom.check(kpot)?;
    let sys = system(cfg, 0.0, None);
    let x = to_solver_gauge(cfg.geom, sys.c_eff, f, kpot, kappa);
    let nr = newton(&sys, x)?;
    if nr.sup.0.max(nr.sup.1) > RESIDUAL_TOL {
        return Err(Error::SolverFailed {
            solver: "gravitating Newton",
            iterations: nr.iters,
            residual: nr.sup.0.max(nr.sup.1),
        });
    }
    make_solution(cfg, &sys, 0.0, nr)
}

/// Continuity method in α from the decoupled system at α = 0. With `init`,
/// Newton is first tried directly at the target α from that guess.
pub fn solve_gravitating(
    cfg: &GravConfig,
    init: Option<(&[f64], &[f64])>,
) -> Result<ContinuityOutcome> {
    let target = cfg.alpha;
    if let Some((f0, k0)) = init {
        if let Ok(sol) = solve_at(cfg, f0, k0, 0.0) {
            let trace = ContinuityTrace {
                rows: vec![trace_row(&sol)],
            };
            return Ok(ContinuityOutcome {
                solution: Some(sol),
                trace,
                status: ContinuityStatus::Converged,
            });
        }
    }
    let stalled = |alpha, step, d1: &[f64], mf: &[f64], reason: String| {
        ContinuityStatus::Stalled(StallReport {
            alpha,
            target,
            last_step: step,
            d1_proxy: d1.to_vec(),
            mean_f: mf.to_vec(),
            reason,
        })
    };
    let start_cfg = cfg.with_alpha(0.0)?;
    let (f0, k0) = match decoupled_start(&start_cfg) {
        Ok(v) => v,
        Err(e) => {
            let status = stalled(
                0.0,
                cfg.alpha_step,
                &[],
                &[],
                format!("no decoupled start: {e}"),
            );
            return Ok(ContinuityOutcome {
                solution: None,
                trace: ContinuityTrace::default(),
                status,
            });
        }
    };
    let sys0 = system(&start_cfg, 0.0, None);
    let x0 = to_solver_gauge(cfg.geom, sys0.c_eff, &f0, &k0, 0.0);
    let ev0 = sys0.eval(&x0);
    let mut current = make_solution(
        &start_cfg,
        &sys0,
        0.0,
        NewtonResult {
            sup: ev0.sup(),
            x: x0,
            iters: 0,
        },
    )?;
    let mut trace = ContinuityTrace {
        rows: vec![trace_row(&current)],
    };
    let mut d1 = vec![d1_proxy(cfg.geom, &current.kpot)];
    let mut mean_f = vec![cfg.geom.mean(&current.f)];
    let mut previous: Option<GravSolution> = None;
    let mut step = cfg.alpha_step;
    while current.alpha < target {
        let next_alpha = (current.alpha + step).min(target);
        let step_cfg = cfg.with_alpha(next_alpha)?;
        // secant predictor from the last two accepted points
        let (fg, kg) = match &previous {
            Some(p) if p.alpha < current.alpha => {
                let r = (next_alpha - current.alpha) / (current.alpha - p.alpha);
                let fg: Vec<f64> = current
                    .f
                    .iter()
                    .zip(&p.f)
                    .map(|(a, b)| a + r * (a - b))
                    .collect();
                let kg: Vec<f64> = current
                    .kpot
                    .iter()
                    .zip(&p.kpot)
                    .map(|(a, b)| a + r * (a - b))
                    .collect();
                (fg, kg)
            }
            _ => (current.f.clone(), current.kpot.clone()),
        };
        let attempt = solve_at(&step_cfg, &fg, &kg, current.kappa)
            .or_else(|_| solve_at(&step_cfg, &current.f, &current.kpot, current.kappa));
        match attempt {
            Ok(sol) => {
                trace.rows.push(trace_row(&sol));
                d1.push(d1_proxy(cfg.geom, &sol.kpot));
                mean_f.push(cfg.geom.mean(&sol.f));
                previous = Some(std::mem::replace(&mut current, sol));
                step = (2.0 * step).min(cfg.alpha_step);
            }
            Err(e) => {
                step *= 0.5;
                if step < cfg.min_alpha_step {
                    let status = stalled(current.alpha, step, &d1, &mean_f, e.to_string());
                    return Ok(ContinuityOutcome {
                        solution: Some(current),
                        trace,
                        status,
                    });
                }
            }
        }
    }
    Ok(ContinuityOutcome {
        solution: Some(current),
        trace,
        status: ContinuityStatus::Converged,
    })
}

/// Twisting density ξ/w − 1 for ξ given against ω₀.
pub fn twist_density(geom: &BackgroundGeometry, xi: &[f64], kpot: &[f64]) -> Result<ScalarField> {
    let w = geom.conformal_factor(kpot)?;
    Ok(xi.iter().zip(&w).map(|(x, w)| x / w - 1.0).collect())
}

fn check_xi(geom: &BackgroundGeometry, xi: &[f64]) -> Result<()> {
    geom.check(xi)?;
    if let Some(bad) = xi.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "twisting density must be positive, found {bad}"
        )));
    }
    let total = geom.integrate(xi);
    if (total - geom.volume).abs() > 1e-8 * geom.volume {
        return Err(Error::InvalidInput(format!(
            "twisting density integrates to {total}, expected {}",
            geom.volume
        )));
    }
    Ok(())
}

/// Default bound on |λ| for the twisted system.
pub fn twist_bound(c: f64) -> f64 {
    0.2 * c.abs() + 0.1
}

/// The twisted system with an extra term −λ(Λ_ωξ − 1) in the scalar
/// curvature equation, by Newton from `init` (or from the untwisted
/// solution), continuing in λ if the direct attempt fails.
pub fn solve_twisted(
    cfg: &GravConfig,
    xi: &[f64],
    lambda: f64,
    init: Option<&GravSolution>,
) -> Result<GravSolution> {
    check_xi(cfg.geom, xi)?;
    let c = cfg.c();
    if !(lambda.abs() <= twist_bound(c)) {
        return Err(Error::InvalidInput(format!(
            "|lambda| = {} exceeds {}",
            lambda.abs(),
            twist_bound(c)
        )));
    }
    let base = match init {
        Some(s) => s.clone(),
        None => solve_gravitating(cfg, None)?.into_result()?.0,
    };
    let attempt = |lam: f64, from: &GravSolution| -> Result<GravSolution> {
        let sys = system(cfg, lam, twist_source(cfg.geom, xi, lam)?);
        let x = to_solver_gauge(cfg.geom, sys.c_eff, &from.f, &from.kpot, from.kappa);
        let nr = newton(&sys, x)?;
        if nr.sup.0.max(nr.sup.1) > RESIDUAL_TOL {
            return Err(Error::SolverFailed {
                solver: "twisted Newton",
                iterations: nr.iters,
                residual: nr.sup.0.max(nr.sup.1),
            });
        }
        make_solution(cfg, &sys, lam, nr)
    };
    if let Ok(s) = attempt(lambda, &base) {
        return Ok(s);
    }
    let mut cur = base;
    let mut lam = cur.lambda;
    let mut dl = (lambda - lam) / 4.0;
    while lam != lambda {
        if dl.abs() < 1e-6 * (1.0 + lambda.abs()) {
            return Err(Error::SolverFailed {
                solver: "twisted continuation",
                iterations: 0,
                residual: (lambda - lam).abs(),
            });
        }
        let next = if (lambda - lam).abs() <= dl.abs() {
            lambda
        } else {
            lam + dl
        };
        match attempt(next, &cur) {
            Ok(s) => {
                cur = s;
                lam = next;
            }
            Err(_) => dl *= 0.5,
        }
    }
    Ok(cur)
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    /// sup |Λ_ω iF_h + ½(|φ|²_h − τ)|.
    pub vortex_residual: f64,
    /// Mean, spread (max − min) and sup |· − c| of the scalar equation's left side.
    pub scalar_mean: f64,
    pub scalar_spread: f64,
    pub scalar_residual: f64,
    pub c: f64,
    /// |∫(P − τ)E ω₀ + 4πN| and |∫E ω₀ − V|.
    pub normalization: (f64, f64),
    /// sup |φ|²_h − τ (nonpositive at a solution).
    pub density_excess: f64,
    pub passed: bool,
}

impl VerifyReport {
    pub fn report(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "vortex_residual = {:.6e}", self.vortex_residual);
        let _ = writeln!(s, "scalar_mean = {:.17e}", self.scalar_mean);
        let _ = writeln!(s, "scalar_spread = {:.6e}", self.scalar_spread);
        let _ = writeln!(s, "scalar_residual = {:.6e}", self.scalar_residual);
        let _ = writeln!(s, "c = {:.17e}", self.c);
        let _ = writeln!(s, "normalization_f = {:.6e}", self.normalization.0);
        let _ = writeln!(s, "normalization_kpot = {:.6e}", self.normalization.1);
        let _ = writeln!(s, "density_excess = {:.6e}", self.density_excess);
        let _ = writeln!(s, "verified = {}", self.passed);
        s
    }
}

/// Check a solution against the original system
/// S_ω + α(Δ_ω + τ)(P − τ) = c, Λ_ω iF_h + ½(P − τ) = 0, computed from
/// w = 1 − Δ₀φ rather than from the exponential form.
pub fn verify_solution(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    sol: &GravSolution,
) -> Result<VerifyReport> {
    verify_inner(geom, higgs, alpha, tau, sol, None)
}

/// As [`verify_solution`] for the twisted scalar equation
/// S_ω + αΔ_ωP − 2ατΛ_ω iF_h − λ(Λ_ωξ − 1) = c.
pub fn verify_twisted(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    xi: &[f64],
    sol: &GravSolution,
) -> Result<VerifyReport> {
    check_xi(geom, xi)?;
    verify_inner(geom, higgs, alpha, tau, sol, Some(xi))
}

fn verify_inner(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    sol: &GravSolution,
    xi: Option<&[f64]>,
) -> Result<VerifyReport> {
    geom.check(&sol.f)?;
    geom.check(&sol.kpot)?;
    let n = geom.len();
    let c = constant_c(geom.genus, alpha, tau, higgs.degree(), geom.volume);
    let w = geom.conformal_factor(&sol.kpot)?;
    let s = geom.curvature_from_factor(&w);
    let p: Vec<f64> = higgs
        .p0
        .iter()
        .zip(&sol.f)
        .map(|(p, f)| p * (2.0 * f).exp())
        .collect();
    let lp = geom.laplacian(&p);
    let lf = geom.laplacian(&sol.f);
    let cd = higgs.curvature_density;
    let mut vortex_residual = 0.0_f64;
    let mut lhs = Vec::with_capacity(n);
    for i in 0..n {
        let curv = (cd + lf[i]) / w[i];
        vortex_residual = vortex_residual.max((curv + 0.5 * (p[i] - tau)).abs());
        let mut v = s[i] + alpha * lp[i] / w[i];
        match xi {
            None => v += alpha * tau * (p[i] - tau),
            Some(xi) => v += -2.0 * alpha * tau * curv - sol.lambda * (xi[i] / w[i] - 1.0),
        }
        lhs.push(v);
    }
    let scalar_mean = geom.mean(&lhs);
    let (lo, hi) = lhs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(*v), b.max(*v))
        });
    let scalar_residual = lhs.iter().fold(0.0_f64, |m, v| m.max((v - c).abs()));
    let cfg_alpha = GravConfig {
        geom,
        higgs,
        tau,
        alpha,
        alpha_step: DEFAULT_ALPHA_STEP,
        min_alpha_step: MIN_ALPHA_STEP,
    };
    let source = match xi {
        Some(xi) => twist_source(geom, xi, sol.lambda)?,
        None => None,
    };
    let sys = system(&cfg_alpha, sol.lambda, source);
    let e: Vec<f64> = sys
        .exponent(&sol.f, &p, &sol.kpot, sol.kappa)
        .iter()
        .map(|v| v.exp())
        .collect();
    let nf = geom.integrate(
        &p.iter()
            .zip(&e)
            .map(|(p, e)| (p - tau) * e)
            .collect::<Vec<_>>(),
    );
    let normalization = (
        (nf + 4.0 * PI * higgs.degree() as f64).abs(),
        (geom.integrate(&e) - geom.volume).abs(),
    );
    let density_excess = p.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)) - tau;
    let scalar_spread = hi - lo;
    let passed = vortex_residual <= VERIFY_TOL
        && scalar_spread <= VERIFY_TOL
        && (scalar_mean - c).abs() <= VERIFY_MEAN_TOL
        && scalar_residual <= VERIFY_TOL;
    Ok(VerifyReport {
        vortex_residual,
        scalar_mean,
        scalar_spread,
        scalar_residual,
        c,
        normalization,
        density_excess,
        passed,
    })
}

/// 2ατ(N − 2n₁)(V − 4πN/τ).
pub fn futaki_closed_form(alpha: f64, tau: f64, n: u32, n1: u32, volume: f64) -> Result<f64> {
    let nf = n as f64;
    if !(tau > 0.0) || volume <= 4.0 * PI * nf / tau {
        return Err(Error::BradlowViolated {
            tau_volume: tau * volume,
            bound: 4.0 * PI * nf,
        });
    }
    if n1 > n {
        return Err(Error::InvalidInput(format!("n1 = {n1} exceeds N = {n}")));
    }
    Ok(2.0 * alpha * tau * (nf - 2.0 * n1 as f64) * (volume - 4.0 * PI * nf / tau))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Polystable,
    Unstable,
}

impl std::fmt::Display for Stability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stability::Stable => "stable",
            Stability::Polystable => "polystable",
            Stability::Unstable => "unstable",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum StabilityWitness {
    None,
    /// A point carrying at least half of the degree.
    Point {
        point: SurfacePoint,
        multiplicity: u32,
    },
    /// The two points of a balanced divisor (N/2)(p + q).
    Pair(SurfacePoint, SurfacePoint),
}

/// Classification of a multiplicity vector; the index is the witness point
/// (first of the pair when polystable).
pub fn classify_multiplicities(mults: &[u32]) -> (Stability, Option<usize>) {
    let n: u32 = mults.iter().sum();
    let Some((imax, &m)) = mults
        .iter()
        .enumerate()
        .max_by_key(|(i, m)| (**m, std::cmp::Reverse(*i)))
    else {
        return (Stability::Unstable, None);
    };
    if 2 * m < n {
        (Stability::Stable, None)
    } else if 2 * m == n && mults.len() == 2 {
        (Stability::Polystable, Some(imax))
    } else {
        (Stability::Unstable, Some(imax))
    }
}

pub fn check_polystability(divisor: &Divisor) -> (Stability, StabilityWitness) {
    let mults = divisor.multiplicities();
    let pts = divisor.points();
    match classify_multiplicities(mults) {
        (Stability::Stable, _) | (_, None) => {
            (classify_multiplicities(mults).0, StabilityWitness::None)
        }
        (Stability::Polystable, Some(i)) => (
            Stability::Polystable,
            StabilityWitness::Pair(pts[i], pts[1 - i]),
        ),
        (Stability::Unstable, Some(i)) => (
            Stability::Unstable,
            StabilityWitness::Point {
                point: pts[i],
                multiplicity: mults[i],
            },
        ),
    }
}

/// All multiplicity vectors (partitions) of N, largest part first.
pub fn multiplicity_partitions(n: u32) -> Vec<Vec<u32>> {
    fn rec(n: u32, max: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if n == 0 {
            out.push(prefix.clone());
            return;
        }
        for k in (1..=n.min(max)).rev() {
            prefix.push(k);
            rec(n - k, k, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, n, &mut Vec::new(), &mut out);
    out
}

/// Brute-force Hilbert–Mumford classification of a binary form with the
/// given root multiplicities. For the 1-PS with attracting fixed point p and
/// repelling fixed point q the monomial weights fill [2m_q − N, N − 2m_p];
/// the limit along the 1-PS keeps the top-weight monomials. Fixed points
/// range over the support plus two generic points.
pub fn hilbert_mumford_classify(mults: &[u32]) -> Stability {
    let n = mults.iter().sum::<u32>() as i64;
    let mut cand: Vec<i64> = mults.iter().map(|m| *m as i64).collect();
    cand.extend([0, 0]);
    let mut sorted = mults.to_vec();
    sorted.sort_unstable();
    let (mut stable, mut semistable, mut closed) = (true, true, true);
    for (i, mp) in cand.iter().enumerate() {
        for (j, mq) in cand.iter().enumerate() {
            if i == j {
                continue;
            }
            let (lo, hi) = (2 * mq - n, n - 2 * mp);
            stable &= hi > 0;
            semistable &= hi >= 0;
            if hi == 0 {
                // the limit is the weight-0 monomial x^{N/2}y^{N/2}, unless the
                // form already is that monomial
                let limit = vec![(n / 2) as u32; 2];
                closed &= lo == 0 || limit == sorted;
            }
        }
    }
    if stable {
        Stability::Stable
    } else if semistable && closed {
        Stability::Polystable
    } else {
        Stability::Unstable
    }
}
