//! The vortex equation iF_h + ½(|φ|²_h − τ)ω_φ = 0 at a fixed background,
//! solved by Newton's method on its convex functional.
//!
//! With h = h₀e^{2f} and ω_φ = w·ω₀, the equation reads
//! Δ₀f + 2πN/V + ½(P₀e^{2f} − τ)w = 0 as a density against ω₀.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::higgs::HiggsData;
use crate::linalg::sup_norm;
use crate::surface::{BackgroundGeometry, ScalarField};

pub const MAX_NEWTON_STEPS: usize = 60;

/// Mean of f below which a stalling iteration is read as nonexistence.
const DIVERGENCE_MEAN: f64 = -50.0;

#[derive(Clone, Debug)]
pub struct VortexProblem<'a> {
    pub geom: &'a BackgroundGeometry,
    pub higgs: &'a HiggsData,
    pub tau: f64,
    pub kpot: ScalarField,
    w: ScalarField,
}

#[derive(Clone, Debug)]
pub struct VortexSolution {
    /// h = h₀e^{2f}.
    pub f: ScalarField,
    pub residual_sup: f64,
    /// |∫|φ|²_h ω − (τV − 4πN)|.
    pub degree_defect: f64,
    /// sup |φ|²_h.
    pub pointwise_max: f64,
    /// sup-norm residual before each Newton step and at exit.
    pub residual_history: Vec<f64>,
}

impl VortexSolution {
    pub fn iterations(&self) -> usize {
        self.residual_history.len() - 1
    }
}

impl<'a> VortexProblem<'a> {
    pub fn new(
        geom: &'a BackgroundGeometry,
        higgs: &'a HiggsData,
        tau: f64,
        kpot: ScalarField,
    ) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidInput(format!("tau = {tau} must be positive")));
        }
        geom.check(&kpot)?;
        if higgs.u0.len() != geom.len() {
            return Err(Error::InvalidInput(
                "Higgs data belongs to a different grid".into(),
            ));
        }
        let w = geom.conformal_factor(&kpot)?;
        Ok(Self {
            geom,
            higgs,
            tau,
            kpot,
            w,
        })
    }

    /// Problem on the undeformed background ω₀.
    pub fn flat(geom: &'a BackgroundGeometry, higgs: &'a HiggsData, tau: f64) -> Result<Self> {
        Self::new(geom, higgs, tau, geom.constant(0.0))
    }

    /// Conformal factor ω_φ/ω₀.
    pub fn conformal_factor(&self) -> &[f64] {
        &self.w
    }

    pub fn degree(&self) -> f64 {
        self.higgs.degree() as f64
    }

    /// τV − 4πN.
    pub fn bradlow_margin(&self) -> f64 {
        self.tau * self.geom.volume - 4.0 * PI * self.degree()
    }

    /// |φ|²_h for h = h₀e^{2f}.
    pub fn density(&self, f: &[f64]) -> ScalarField {
        self.higgs
            .p0
            .iter()
            .zip(f)
            .map(|(p, f)| p * (2.0 * f).exp())
            .collect()
    }

    /// Curvature density Λ_ω iF_h = (2πN/V + Δ₀f)/w.
    pub fn curvature(&self, f: &[f64]) -> ScalarField {
        let c = self.higgs.curvature_density;
        self.geom
            .laplacian(f)
            .iter()
            .zip(&self.w)
            .map(|(l, w)| (c + l) / w)
            .collect()
    }

    /// Λ_ω iF_h + ½(|φ|²_h − τ), the equation as an ω_φ-density.
    pub fn residual(&self, f: &[f64]) -> ScalarField {
        let g = mhat_gradient(self, f);
        g.iter().zip(&self.w).map(|(g, w)| g / w).collect()
    }

    /// ½∫|∇|φ|²_h|² ω₀, bounded by 2πτ²N at a solution.
    pub fn density_gradient_energy(&self, f: &[f64]) -> f64 {
        0.5 * self.geom.integrate(&self.geom.grad_sq(&self.density(f)))
    }

    fn default_init(&self) -> ScalarField {
        let m = self.geom.mean(&self.higgs.p0).max(1e-300);
        self.geom.constant(0.5 * (self.tau.ln() - m.ln()))
    }
}

/// M̂(f) = ∫i∂f∧∂̄f + ¼∫|φ|²_{h₀}e^{2f}ω − (τ/2)∫fω + (2πN/V)∫fω₀ − ¼∫|φ|²_{h₀}ω
/// with ω = ω_φ.
pub fn mhat_energy(problem: &VortexProblem, f: &[f64]) -> f64 {
    let geom = problem.geom;
    let c = problem.higgs.curvature_density;
    let tau = problem.tau;
    let lf = geom.laplacian(f);
    let mut acc = 0.0;
    for i in 0..f.len() {
        let p0 = problem.higgs.p0[i];
        let w = problem.w[i];
        let d = 0.5 * f[i] * lf[i] + 0.25 * p0 * ((2.0 * f[i]).exp() - 1.0) * w
            - 0.5 * tau * f[i] * w
            + c * f[i];
        acc += geom.area_weights[i] * d;
    }
    acc
}

/// Density g with d/dt M̂(f + tḟ) = ∫ḟ g ω₀ for every represented ḟ.
pub fn mhat_gradient(problem: &VortexProblem, f: &[f64]) -> ScalarField {
    let geom = problem.geom;
    let c = problem.higgs.curvature_density;
    let tau = problem.tau;
    let lf = geom.laplacian(f);
    let g: ScalarField = (0..f.len())
        .map(|i| {
            let p = problem.higgs.p0[i] * (2.0 * f[i]).exp();
            lf[i] + c + 0.5 * (p - tau) * problem.w[i]
        })
        .collect();
    geom.project(&g)
}

fn residual_sup(problem: &VortexProblem, g: &[f64]) -> f64 {
    g.iter()
        .zip(&problem.w)
        .fold(0.0_f64, |m, (g, w)| m.max((g / w).abs()))
}

/// Newton's method with Armijo backtracking on M̂.
pub fn solve_vortex(problem: &VortexProblem, init: Option<&[f64]>) -> Result<VortexSolution> {
    let geom = problem.geom;
    let tau = problem.tau;
    let margin = problem.bradlow_margin();
    if margin <= 0.0 {
        return Err(Error::BradlowViolated {
            tau_volume: tau * geom.volume,
            bound: 4.0 * PI * problem.degree(),
        });
    }
    let mut f = match init {
        Some(f0) => {
            geom.check(f0)?;
            geom.project(f0)
        }
        None => problem.default_init(),
    };
    let tol = 1e-8 * tau;
    let mut energy = mhat_energy(problem, &f);
    let mut g = mhat_gradient(problem, &f);
    let mut res = residual_sup(problem, &g);
    let mut history = vec![res];
    let mut steps = 0;
    while res > tol {
        if steps == MAX_NEWTON_STEPS {
            return Err(Error::SolverFailed {
                solver: "vortex Newton",
                iterations: steps,
                residual: res,
            });
        }
        steps += 1;
        let pw: Vec<f64> = problem
            .density(&f)
            .iter()
            .zip(&problem.w)
            .map(|(p, w)| p * w)
            .collect();
        if !(geom.integrate(&pw) > 1e-300) {
            return Err(Error::BradlowViolated {
                tau_volume: tau * geom.volume,
                bound: 4.0 * PI * problem.degree(),
            });
        }
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let rtol = (0.1 * res / (1.0 + tau)).clamp(1e-13, 1e-4);
        let step = geom.helmholtz_cg(&pw, &rhs, rtol)?;
        let slope = geom.inner(&g, &step);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = f.iter().zip(&step).map(|(a, b)| a + t * b).collect();
            let e = mhat_energy(problem, &trial);
            let negligible = slope.abs() < 1e-13 * (1.0 + energy.abs());
            if e.is_finite() && (e <= energy + 1e-4 * t * slope || (negligible && t == 1.0)) {
                accepted = Some((trial, e));
                break;
            }
            t *= 0.5;
        }
        let (trial, e) = match accepted {
            Some(x) => x,
            None => {
                return Err(Error::SolverFailed {
                    solver: "vortex line search",
                    iterations: steps,
                    residual: res,
                });
            }
        };
        f = trial;
        energy = e;
        g = mhat_gradient(problem, &f);
        let new_res = residual_sup(problem, &g);
        if geom.mean(&f) < DIVERGENCE_MEAN && new_res >= res {
            return Err(Error::BradlowViolated {
                tau_volume: tau * geom.volume,
                bound: 4.0 * PI * problem.degree(),
            });
        }
        res = new_res;
        history.push(res);
    }
    // a couple of extra full steps while they still pay off
    for _ in 0..2 {
        let pw: Vec<f64> = problem
            .density(&f)
            .iter()
            .zip(&problem.w)
            .map(|(p, w)| p * w)
            .collect();
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let Ok(step) = geom.helmholtz_cg(&pw, &rhs, 1e-13) else {
            break;
        };
        let trial: Vec<f64> = f.iter().zip(&step).map(|(a, b)| a + b).collect();
        let gt = mhat_gradient(problem, &trial);
        let rt = residual_sup(problem, &gt);
        if !(rt < 0.5 * res) {
            break;
        }
        f = trial;
        g = gt;
        res = rt;
        history.push(res);
    }
    let p = problem.density(&f);
    let pw: Vec<f64> = p.iter().zip(&problem.w).map(|(p, w)| p * w).collect();
    Ok(VortexSolution {
        residual_sup: res,
        degree_defect: (geom.integrate(&pw) - margin).abs(),
        pointwise_max: sup_norm(&p),
        residual_history: history,
        f,
    })
}

/// Both sides of ∫|∇(f_a − f_b)|² ≤ (τ²/4)X + τ√(2πN)·√X with
/// X = ∫|∇(ψ_a − ψ_b)|², gradients and integrals for ω₀.
pub fn vortex_stability_bound(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    tau: f64,
    kpot_a: &[f64],
    kpot_b: &[f64],
) -> Result<(f64, f64)> {
    let pa = VortexProblem::new(geom, higgs, tau, kpot_a.to_vec())?;
    let pb = VortexProblem::new(geom, higgs, tau, kpot_b.to_vec())?;
    let fa = solve_vortex(&pa, None)?.f;
    let fb = solve_vortex(&pb, Some(&fa))?.f;
    let df: Vec<f64> = fa.iter().zip(&fb).map(|(a, b)| a - b).collect();
    let dk: Vec<f64> = kpot_a.iter().zip(kpot_b).map(|(a, b)| a - b).collect();
    let lhs = 2.0 * geom.dirichlet_pairing(&df, &df);
    let x = 2.0 * geom.dirichlet_pairing(&dk, &dk);
    let n = higgs.degree() as f64;
    Ok((
        lhs,
        0.25 * tau * tau * x + tau * (2.0 * PI * n).sqrt() * x.max(0.0).sqrt(),
    ))
}

#[cfg(test)]
mod tests;
