//! Energy functionals on pairs (f, φ) and on Kähler potentials, with their
//! first and second variations.
//!
//! All integrals use the quadrature of the background grid; densities are
//! taken against ω₀ so that ω_φ = w ω₀ with w = 1 − Δ₀φ.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::Result;
use crate::higgs::HiggsData;
use crate::surface::{BackgroundGeometry, ScalarField};
use crate::vortex::{solve_vortex, VortexProblem, VortexSolution};

/// c = 2π(χ − 2ατN)/V.
pub fn constant_c(genus: u32, alpha: f64, tau: f64, n: u32, volume: f64) -> f64 {
    let chi = 2.0 - 2.0 * genus as f64;
    2.0 * PI * (chi - 2.0 * alpha * tau * n as f64) / volume
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants {
    pub alpha: f64,
    pub tau: f64,
    pub volume: f64,
    pub degree: u32,
    pub c: f64,
    pub mean_s: f64,
}

impl Constants {
    pub fn new(geom: &BackgroundGeometry, higgs: &HiggsData, alpha: f64, tau: f64) -> Self {
        let degree = higgs.degree();
        Self {
            alpha,
            tau,
            volume: geom.volume,
            degree,
            c: constant_c(geom.genus, alpha, tau, degree, geom.volume),
            mean_s: geom.mean_curvature,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyBreakdown {
    pub k_energy: f64,
    pub m_alpha: f64,
    pub k_alpha: f64,
    /// (1/V)∫ log(ω_φ/ω₀) ω_φ.
    pub entropy: f64,
    pub am: f64,
    pub constants: Constants,
}

impl EnergyBreakdown {
    /// `key = value` lines with 17 significant digits.
    pub fn report(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("k_energy", self.k_energy),
            ("m_alpha", self.m_alpha),
            ("k_alpha", self.k_alpha),
            ("am", self.am),
            ("c", self.constants.c),
            ("mean_s", self.constants.mean_s),
        ] {
            let _ = writeln!(s, "{k} = {v:.16e}");
        }
        s
    }
}

fn sum_weighted(geom: &BackgroundGeometry, f: impl Fn(usize) -> f64) -> f64 {
    geom.area_weights
        .iter()
        .enumerate()
        .map(|(i, a)| a * f(i))
        .sum()
}

/// K(φ) = ½∫ log(ω_φ/ω₀) ω_φ + (⟨S⟩/2)∫ φ(ω_φ − ω₀).
pub fn k_energy(geom: &BackgroundGeometry, kpot: &[f64]) -> Result<f64> {
    let w = geom.conformal_factor(kpot)?;
    let s0 = geom.mean_curvature;
    Ok(sum_weighted(geom, |i| {
        0.5 * w[i] * w[i].ln() + 0.5 * s0 * kpot[i] * (w[i] - 1.0)
    }))
}

pub fn entropy(geom: &BackgroundGeometry, kpot: &[f64]) -> Result<f64> {
    let w = geom.conformal_factor(kpot)?;
    Ok(sum_weighted(geom, |i| w[i] * w[i].ln()) / geom.volume)
}

/// M_α(f, φ) = 2α∫f(iF_{h₀} + iF_{h_f}) + α∫(|φ|²_{h_f}ω_φ − |φ|²_{h₀}ω₀) − 2ατ∫fω_φ
///           + (c − ⟨S⟩)∫φ i∂∂̄φ + ∫φ(−Ric ω₀ + 2ατ iF_{h₀} + cω₀).
pub fn m_alpha_pair(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    f: &[f64],
    kpot: &[f64],
) -> f64 {
    let k = Constants::new(geom, higgs, alpha, tau);
    let cd = higgs.curvature_density;
    let lf = geom.laplacian(f);
    let lk = geom.laplacian(kpot);
    let last = -k.mean_s + 2.0 * alpha * tau * cd + k.c;
    let local = sum_weighted(geom, |i| {
        let w = 1.0 - lk[i];
        let p = higgs.p0[i] * (2.0 * f[i]).exp();
        2.0 * alpha * f[i] * (2.0 * cd + lf[i]) + alpha * (p * w - higgs.p0[i])
            - 2.0 * alpha * tau * f[i] * w
            + kpot[i] * last
    });
    local - (k.c - k.mean_s) * geom.dirichlet_pairing(kpot, kpot)
}

/// M_α(ψ) with f = f_ψ the vortex solution, in the form with the vortex
/// equation eliminated.
pub fn m_alpha_reduced_with(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    f: &[f64],
    kpot: &[f64],
) -> f64 {
    let k = Constants::new(geom, higgs, alpha, tau);
    let cd = higgs.curvature_density;
    let n = higgs.degree() as f64;
    let last = -k.mean_s + 2.0 * alpha * tau * cd + k.c;
    let local = sum_weighted(geom, |i| {
        2.0 * alpha * f[i] * 2.0 * cd - 2.0 * alpha * tau * f[i] - alpha * higgs.p0[i]
            + kpot[i] * last
    });
    local
        + 4.0 * alpha * geom.dirichlet_pairing(f, f)
        + 4.0 * alpha * tau * geom.dirichlet_pairing(f, kpot)
        - (k.c - k.mean_s) * geom.dirichlet_pairing(kpot, kpot)
        + alpha * tau * (geom.volume - 4.0 * PI * n / tau)
}

fn vortex_at(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    tau: f64,
    kpot: &[f64],
) -> Result<VortexSolution> {
    let p = VortexProblem::new(geom, higgs, tau, kpot.to_vec())?;
    solve_vortex(&p, None)
}

pub fn m_alpha_reduced(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    kpot: &[f64],
) -> Result<f64> {
    let sol = vortex_at(geom, higgs, tau, kpot)?;
    Ok(m_alpha_reduced_with(geom, higgs, alpha, tau, &sol.f, kpot))
}

/// K_α(ψ) = K(ψ) + M_α(ψ), given the vortex solution f_ψ.
pub fn k_alpha_with(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    f: &[f64],
    kpot: &[f64],
) -> Result<EnergyBreakdown> {
    let k_energy = k_energy(geom, kpot)?;
    let m_alpha = m_alpha_reduced_with(geom, higgs, alpha, tau, f, kpot);
    Ok(EnergyBreakdown {
        k_energy,
        m_alpha,
        k_alpha: k_energy + m_alpha,
        entropy: entropy(geom, kpot)?,
        am: am_functional(geom, kpot),
        constants: Constants::new(geom, higgs, alpha, tau),
    })
}

pub fn k_alpha_reduced(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    kpot: &[f64],
) -> Result<EnergyBreakdown> {
    let sol = vortex_at(geom, higgs, tau, kpot)?;
    k_alpha_with(geom, higgs, alpha, tau, &sol.f, kpot)
}

/// K̃_α(f, φ) = K(φ) + M_α(f, φ).
pub fn k_tilde(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    f: &[f64],
    kpot: &[f64],
) -> Result<f64> {
    Ok(k_energy(geom, kpot)? + m_alpha_pair(geom, higgs, alpha, tau, f, kpot))
}

/// −[S₀ + Δ₀u + αΔ₀P − 2ατ(2πN/V + Δ₀f) − cw] with u = ½log w, P = |φ|²_{h_f}:
/// the φ-gradient of K̃_α as a density against ω₀ (valid for any f).
pub fn sigma_pair_density(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    f: &[f64],
    kpot: &[f64],
) -> Result<ScalarField> {
    let k = Constants::new(geom, higgs, alpha, tau);
    let w = geom.conformal_factor(kpot)?;
    let u: Vec<f64> = w.iter().map(|w| 0.5 * w.ln()).collect();
    let p: Vec<f64> = higgs
        .p0
        .iter()
        .zip(f)
        .map(|(p, f)| p * (2.0 * f).exp())
        .collect();
    let lu = geom.laplacian(&u);
    let lp = geom.laplacian(&p);
    let lf = geom.laplacian(f);
    let cd = higgs.curvature_density;
    let g: Vec<f64> = (0..f.len())
        .map(|i| {
            -(k.mean_s + lu[i] + alpha * lp[i] - 2.0 * alpha * tau * (cd + lf[i]) - k.c * w[i])
        })
        .collect();
    Ok(geom.project(&g))
}

/// The f-gradient of K̃_α: 4α(Δ₀f + 2πN/V + ½(P − τ)w).
pub fn f_gradient_density(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    f: &[f64],
    kpot: &[f64],
) -> Result<ScalarField> {
    let w = geom.conformal_factor(kpot)?;
    let lf = geom.laplacian(f);
    let cd = higgs.curvature_density;
    let g: Vec<f64> = (0..f.len())
        .map(|i| 4.0 * alpha * (lf[i] + cd + 0.5 * (higgs.p0[i] * (2.0 * f[i]).exp() - tau) * w[i]))
        .collect();
    Ok(geom.project(&g))
}

/// Reduced 1-form density σ̃_α at ψ (with f = f_ψ); zero at gravitating vortices.
pub fn sigma_alpha_density(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    kpot: &[f64],
) -> Result<ScalarField> {
    let sol = vortex_at(geom, higgs, tau, kpot)?;
    sigma_pair_density(geom, higgs, alpha, tau, &sol.f, kpot)
}

/// Two-jet of a path t ↦ (f_t, φ_t) at a point.
#[derive(Clone, Debug)]
pub struct PathJet {
    pub f: ScalarField,
    pub kpot: ScalarField,
    pub df: ScalarField,
    pub dkpot: ScalarField,
    pub ddf: ScalarField,
    pub ddkpot: ScalarField,
}

/// The five terms of d²K̃_α/dt² along a path, as ω₀-integrals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SecondVariation {
    /// 4α‖df′ + η_{φ′}⌟iF_h‖².
    pub connection: f64,
    /// 4α‖Jη_{φ′}⌟d_Aφ − f′φ‖².
    pub higgs: f64,
    /// 2‖∂̄∇^{1,0}φ′‖².
    pub metric: f64,
    /// 4α∫(f″ − …)℘₁ω.
    pub vortex_defect: f64,
    /// ∫(φ″ − …)℘₂ω.
    pub scalar_defect: f64,
    pub total: f64,
}

/// Moment-map densities ℘₁ = Λ_ω iF_h + ½(|φ|²_h − τ) and
/// ℘₂ = −S_ω − αΔ_ω|φ|²_h + 2ατΛ_ω iF_h + c at (f, φ).
pub fn moment_maps(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    f: &[f64],
    kpot: &[f64],
) -> Result<(ScalarField, ScalarField)> {
    let k = Constants::new(geom, higgs, alpha, tau);
    let w = geom.conformal_factor(kpot)?;
    let s = geom.curvature_from_factor(&w);
    let p: Vec<f64> = higgs
        .p0
        .iter()
        .zip(f)
        .map(|(p, f)| p * (2.0 * f).exp())
        .collect();
    let lp = geom.laplacian(&p);
    let lf = geom.laplacian(f);
    let cd = higgs.curvature_density;
    let mut p1 = Vec::with_capacity(f.len());
    let mut p2 = Vec::with_capacity(f.len());
    for i in 0..f.len() {
        let curv = (cd + lf[i]) / w[i];
        p1.push(curv + 0.5 * (p[i] - tau));
        p2.push(-s[i] - alpha * lp[i] / w[i] + 2.0 * alpha * tau * curv + k.c);
    }
    Ok((p1, p2))
}

pub fn second_variation_terms(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    jet: &PathJet,
) -> Result<SecondVariation> {
    let w = geom.conformal_factor(&jet.kpot)?;
    let s = geom.curvature_from_factor(&w);
    let (p1, p2) = moment_maps(geom, higgs, alpha, tau, &jet.f, &jet.kpot)?;
    let p: Vec<f64> = higgs
        .p0
        .iter()
        .zip(&jet.f)
        .map(|(p, f)| p * (2.0 * f).exp())
        .collect();
    let lf = geom.laplacian(&jet.f);
    let lp = geom.laplacian(&p);
    let ldk = geom.laplacian(&jet.dkpot);
    let g_ff = geom.grad_sq(&jet.df);
    let g_fk = geom.grad_dot(&jet.df, &jet.dkpot);
    let g_kk = geom.grad_sq(&jet.dkpot);
    let g_pk = geom.grad_dot(&p, &jet.dkpot);
    let cd = higgs.curvature_density;
    let mut t = [0.0; 5];
    for i in 0..w.len() {
        let a = geom.area_weights[i];
        let curv = (cd + lf[i]) / w[i];
        let q = p[i] * (2.0 * cd + 2.0 * lf[i]) - lp[i];
        t[0] += a * 4.0 * alpha * (g_ff[i] + 2.0 * curv * g_fk[i] + curv * curv * g_kk[i]);
        t[1] += a
            * 4.0
            * alpha
            * (0.25 * q * g_kk[i] / w[i] - jet.df[i] * g_pk[i]
                + jet.df[i] * jet.df[i] * p[i] * w[i]);
        t[2] += a * (0.5 * ldk[i] * ldk[i] / w[i] - s[i] * g_kk[i]);
        t[3] += a
            * 4.0
            * alpha
            * (jet.ddf[i] - 2.0 * g_fk[i] / w[i] - curv * g_kk[i] / w[i])
            * p1[i]
            * w[i];
        t[4] += a * (jet.ddkpot[i] - g_kk[i] / w[i]) * p2[i] * w[i];
    }
    Ok(SecondVariation {
        connection: t[0],
        higgs: t[1],
        metric: t[2],
        vortex_defect: t[3],
        scalar_defect: t[4],
        total: t.iter().sum(),
    })
}

/// ½∫Δ_ωφ̇ Δ_ωu̇ ω + 4α∫[⟨∇ḟ,∇ġ⟩ + ½(τ − |φ|²_h)(ḟΔ_ωu̇ + ġΔ_ωφ̇) + ḟġ|φ|²_h]ω − c∫φ̇Δ_ωu̇ ω,
/// the second derivative of K̃_α in the constant directions a = (ḟ, φ̇), b = (ġ, u̇).
///
/// The last term comes from the constant c in ℘₂ meeting the variation of ω;
/// it is symmetric on its own.
#[allow(clippy::too_many_arguments)]
pub fn hessian_bilinear(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    f: &[f64],
    kpot: &[f64],
    a: (&[f64], &[f64]),
    b: (&[f64], &[f64]),
) -> Result<f64> {
    let c = Constants::new(geom, higgs, alpha, tau).c;
    let w = geom.conformal_factor(kpot)?;
    let la = geom.laplacian(a.1);
    let lb = geom.laplacian(b.1);
    let gd = geom.grad_dot(a.0, b.0);
    Ok(sum_weighted(geom, |i| {
        let p = higgs.p0[i] * (2.0 * f[i]).exp();
        0.5 * la[i] * lb[i] / w[i]
            + 4.0
                * alpha
                * (gd[i]
                    + 0.5 * (tau - p) * (a.0[i] * lb[i] + b.0[i] * la[i])
                    + a.0[i] * b.0[i] * p * w[i])
            - 0.5 * c * (a.1[i] * lb[i] + b.1[i] * la[i])
    }))
}

/// AM(u) = (1/2V)∫u(ω₀ + ω_u).
pub fn am_functional(geom: &BackgroundGeometry, kpot: &[f64]) -> f64 {
    let l = geom.laplacian(kpot);
    sum_weighted(geom, |i| kpot[i] * (2.0 - l[i])) / (2.0 * geom.volume)
}

/// I(u₀, u₁) = V⁻¹∫(u₀ − u₁)(ω_{u₁} − ω_{u₀}).
pub fn i_functional(geom: &BackgroundGeometry, u0: &[f64], u1: &[f64]) -> f64 {
    let d: Vec<f64> = u0.iter().zip(u1).map(|(a, b)| a - b).collect();
    2.0 * geom.dirichlet_pairing(&d, &d) / geom.volume
}

/// J_ξ(φ) = ∫φξ − ½∫φ(ω₀ + ω_φ), with ξ given as a density against ω₀.
pub fn j_xi(geom: &BackgroundGeometry, xi: &[f64], kpot: &[f64]) -> f64 {
    geom.inner(kpot, xi) - geom.volume * am_functional(geom, kpot)
}
