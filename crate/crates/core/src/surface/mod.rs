//! Discretized constant-curvature surfaces: the flat torus (Fourier basis)
//! and the round sphere (spherical harmonics).
//!
//! The Laplacian is the positive operator, Δf ω = 2i∂̄∂f, so
//! Δ = −(Laplace–Beltrami). Kähler potentials act by ω_φ = ω₀(1 − Δ₀φ).

mod dump;
mod green;
pub mod sphere;
pub mod torus;

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{dot_w, pcg};

pub use dump::{read_field, write_field};
pub use green::GreenFunction;
use sphere::{SphCoeffs, SphereGrid};
use torus::TorusGrid;

/// Real values at the grid nodes of a [`BackgroundGeometry`].
pub type ScalarField = Vec<f64>;

/// Smallest admissible conformal factor 1 − Δ₀φ.
pub const CONFORMAL_MARGIN: f64 = 1e-8;

#[derive(Clone, Debug)]
pub enum Grid {
    Torus(TorusGrid),
    Sphere(SphereGrid),
}

/// A point of the surface: planar coordinates on the torus, a unit vector
/// on the sphere (north pole = chart origin).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SurfacePoint {
    Plane([f64; 2]),
    Sphere([f64; 3]),
}

impl SurfacePoint {
    /// Sphere point from the affine chart z = tan(θ/2)e^{iλ}.
    pub fn chart(z: Complex64) -> Self {
        SurfacePoint::Sphere(sphere::chart_to_vector(z))
    }

    pub fn infinity() -> Self {
        SurfacePoint::Sphere(sphere::SOUTH_POLE)
    }
}

#[derive(Clone, Debug)]
pub struct BackgroundGeometry {
    pub genus: u32,
    pub volume: f64,
    pub grid: Grid,
    pub area_weights: Vec<f64>,
    pub mean_curvature: f64,
}

/// Spectral representation of a field, for evaluation off the grid.
#[derive(Clone, Debug)]
pub enum Interpolant {
    Torus(Vec<Complex64>),
    Sphere(SphCoeffs),
}

impl BackgroundGeometry {
    pub fn build_torus(modulus: Complex64, volume: f64, n: usize) -> Result<Self> {
        if n < 16 {
            return Err(Error::InvalidGeometry(format!("torus grid size {n} < 16")));
        }
        if !(modulus.im > 0.0) || !modulus.re.is_finite() || !modulus.im.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "degenerate modulus {modulus}"
            )));
        }
        if !(volume > 0.0) || !volume.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "volume {volume} must be positive"
            )));
        }
        let grid = TorusGrid::new(modulus, volume, n);
        let w = volume / (n * n) as f64;
        Ok(Self {
            genus: 1,
            volume,
            area_weights: vec![w; n * n],
            grid: Grid::Torus(grid),
            mean_curvature: 0.0,
        })
    }

    pub fn build_sphere(volume: f64, band_limit: usize) -> Result<Self> {
        if band_limit < 8 {
            return Err(Error::InvalidGeometry(format!(
                "band limit {band_limit} < 8"
            )));
        }
        if !(volume > 0.0) || !volume.is_finite() {
            return Err(Error::InvalidGeometry(format!(
                "volume {volume} must be positive"
            )));
        }
        let grid = SphereGrid::new(volume, band_limit);
        let area_weights = grid.area_weights();
        Ok(Self {
            genus: 0,
            volume,
            area_weights,
            grid: Grid::Sphere(grid),
            mean_curvature: 4.0 * PI / volume,
        })
    }

    pub fn euler_characteristic(&self) -> f64 {
        2.0 - 2.0 * self.genus as f64
    }

    /// Grid size parameter: n for the torus, L for the sphere.
    pub fn resolution(&self) -> usize {
        match &self.grid {
            Grid::Torus(t) => t.n,
            Grid::Sphere(s) => s.band,
        }
    }

    /// Row length for row-major dumps.
    pub fn row_len(&self) -> usize {
        match &self.grid {
            Grid::Torus(t) => t.n,
            Grid::Sphere(s) => s.nlon,
        }
    }

    pub fn len(&self) -> usize {
        self.area_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.area_weights.is_empty()
    }

    pub fn sphere(&self) -> Option<&SphereGrid> {
        match &self.grid {
            Grid::Sphere(s) => Some(s),
            Grid::Torus(_) => None,
        }
    }

    pub fn torus(&self) -> Option<&TorusGrid> {
        match &self.grid {
            Grid::Torus(t) => Some(t),
            Grid::Sphere(_) => None,
        }
    }

    pub fn check(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values, geometry has {} nodes",
                u.len(),
                self.len()
            )));
        }
        if let Some(i) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite field value at node {i}"
            )));
        }
        Ok(())
    }

    pub fn constant(&self, v: f64) -> ScalarField {
        vec![v; self.len()]
    }

    pub fn integrate(&self, u: &[f64]) -> f64 {
        self.area_weights.iter().zip(u).map(|(w, u)| w * u).sum()
    }

    pub fn mean(&self, u: &[f64]) -> f64 {
        self.integrate(u) / self.volume
    }

    /// ∫ a b ω₀.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        dot_w(&self.area_weights, a, b)
    }

    /// Apply m(λ) to every Laplacian eigenmode.
    pub fn apply_multiplier<F: Fn(f64) -> f64>(&self, u: &[f64], m: F) -> ScalarField {
        match &self.grid {
            Grid::Torus(t) => t.apply_multiplier(u, m),
            Grid::Sphere(s) => s.apply_multiplier(u, m),
        }
    }

    pub fn laplacian(&self, u: &[f64]) -> ScalarField {
        self.apply_multiplier(u, |l| l)
    }

    /// Orthogonal projection onto the represented modes (identity on the torus).
    pub fn project(&self, u: &[f64]) -> ScalarField {
        match &self.grid {
            Grid::Torus(_) => u.to_vec(),
            Grid::Sphere(s) => s.apply_multiplier(u, |_| 1.0),
        }
    }

    pub fn poisson_solve(&self, rhs: &[f64]) -> Result<ScalarField> {
        let integral = self.integrate(rhs);
        let scale: f64 = self
            .area_weights
            .iter()
            .zip(rhs)
            .map(|(w, r)| w * r.abs())
            .sum();
        if integral.abs() > 1e-8 * scale {
            return Err(Error::NotMeanZero { integral, scale });
        }
        Ok(self.apply_multiplier(rhs, |l| if l > 0.0 { 1.0 / l } else { 0.0 }))
    }

    /// Solve (Δ₀ + v)u = rhs for v ≥ 0 with positive mass.
    pub fn helmholtz_solve(&self, v: &[f64], rhs: &[f64]) -> Result<ScalarField> {
        if let Some(bad) = v.iter().find(|x| **x < 0.0 || !x.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "helmholtz potential must be nonnegative, found {bad}"
            )));
        }
        let mass = self.integrate(v);
        if !(mass > 1e-12 * self.volume) {
            return Err(Error::InvalidInput(format!(
                "helmholtz potential has no mass ({mass:.3e})"
            )));
        }
        self.helmholtz_cg(v, rhs, 1e-13)
    }

    pub(crate) fn helmholtz_cg(&self, v: &[f64], rhs: &[f64], rtol: f64) -> Result<ScalarField> {
        let vbar = self.mean(v).max(1e-300);
        let b = self.project(rhs);
        let mut x = self.apply_multiplier(&b, |l| 1.0 / (l + vbar));
        let apply = |u: &[f64]| {
            let mut a = self.laplacian(u);
            let vu: Vec<f64> = v.iter().zip(u).map(|(v, u)| v * u).collect();
            let vu = self.project(&vu);
            for (a, b) in a.iter_mut().zip(&vu) {
                *a += b;
            }
            a
        };
        let st = pcg(
            apply,
            |r| self.apply_multiplier(r, |l| 1.0 / (l + vbar)),
            |a, b| self.inner(a, b),
            &b,
            &mut x,
            rtol,
            2000,
        );
        if !st.converged {
            return Err(Error::SolverFailed {
                solver: "helmholtz CG",
                iterations: st.iterations,
                residual: st.relative_residual,
            });
        }
        Ok(x)
    }

    /// Gradient components in an orthonormal frame of ω₀.
    pub fn gradient(&self, u: &[f64]) -> (ScalarField, ScalarField) {
        match &self.grid {
            Grid::Torus(t) => t.gradient(u),
            Grid::Sphere(s) => s.gradient(u),
        }
    }

    /// Pointwise ⟨∇a, ∇b⟩ for the background metric.
    pub fn grad_dot(&self, a: &[f64], b: &[f64]) -> ScalarField {
        let (ax, ay) = self.gradient(a);
        let (bx, by) = self.gradient(b);
        (0..a.len())
            .map(|i| ax[i] * bx[i] + ay[i] * by[i])
            .collect()
    }

    pub fn grad_sq(&self, a: &[f64]) -> ScalarField {
        let (ax, ay) = self.gradient(a);
        ax.iter().zip(&ay).map(|(x, y)| x * x + y * y).collect()
    }

    /// ∫ i∂a ∧ ∂̄b = ½∫ a Δ₀b ω₀.
    pub fn dirichlet_pairing(&self, a: &[f64], b: &[f64]) -> f64 {
        0.5 * self.inner(a, &self.laplacian(b))
    }

    /// Conformal factor w = ω_φ/ω₀ = 1 − Δ₀φ, checked against the positivity margin.
    pub fn conformal_factor(&self, kpot: &[f64]) -> Result<ScalarField> {
        let lap = self.laplacian(kpot);
        let w: Vec<f64> = lap.iter().map(|l| 1.0 - l).collect();
        let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(min >= CONFORMAL_MARGIN) {
            return Err(Error::NonPositiveConformalFactor { min });
        }
        Ok(w)
    }

    /// Curvature S of ω_φ, normalized so that ∫ S ω_φ = 2πχ.
    pub fn conformal_curvature(&self, kpot: &[f64]) -> Result<ScalarField> {
        let w = self.conformal_factor(kpot)?;
        Ok(self.curvature_from_factor(&w))
    }

    pub fn curvature_from_factor(&self, w: &[f64]) -> ScalarField {
        let u: Vec<f64> = w.iter().map(|w| 0.5 * w.ln()).collect();
        let lu = self.laplacian(&u);
        lu.iter()
            .zip(w)
            .map(|(l, w)| (self.mean_curvature + l) / w)
            .collect()
    }

    pub fn node_point(&self, idx: usize) -> SurfacePoint {
        match &self.grid {
            Grid::Torus(t) => SurfacePoint::Plane(t.node_position(idx)),
            Grid::Sphere(s) => SurfacePoint::Sphere(s.node_vector(idx)),
        }
    }

    /// Geodesic distance.
    pub fn distance(&self, p: &SurfacePoint, q: &SurfacePoint) -> f64 {
        match (&self.grid, p, q) {
            (Grid::Torus(t), SurfacePoint::Plane(a), SurfacePoint::Plane(b)) => t.distance(*a, *b),
            (Grid::Sphere(s), SurfacePoint::Sphere(a), SurfacePoint::Sphere(b)) => {
                s.radius2.sqrt() * sphere::angle(*a, *b)
            }
            _ => f64::NAN,
        }
    }

    pub fn accepts(&self, p: &SurfacePoint) -> bool {
        matches!(
            (&self.grid, p),
            (Grid::Torus(_), SurfacePoint::Plane(_)) | (Grid::Sphere(_), SurfacePoint::Sphere(_))
        )
    }

    pub fn interpolant(&self, u: &[f64]) -> Interpolant {
        match &self.grid {
            Grid::Torus(t) => Interpolant::Torus(t.forward(u)),
            Grid::Sphere(s) => Interpolant::Sphere(s.analysis(u)),
        }
    }

    /// Evaluate the band-limited interpolant at an arbitrary point.
    pub fn evaluate(&self, c: &Interpolant, p: &SurfacePoint) -> f64 {
        match (&self.grid, c, p) {
            (Grid::Torus(t), Interpolant::Torus(c), SurfacePoint::Plane(p)) => {
                t.interpolate_coeffs(c, *p)
            }
            (Grid::Sphere(s), Interpolant::Sphere(c), SurfacePoint::Sphere(v)) => {
                s.evaluate(c, v[2], v[1].atan2(v[0]))
            }
            _ => f64::NAN,
        }
    }

    /// ∫|g| ρ ω₀, resolving the kinks of |g| along its zero set on the sphere.
    pub fn integrate_abs(&self, g: &[f64], rho: &[f64]) -> f64 {
        match &self.grid {
            Grid::Torus(_) => self
                .area_weights
                .iter()
                .zip(g)
                .zip(rho)
                .map(|((w, g), r)| w * g.abs() * r)
                .sum(),
            Grid::Sphere(s) => sphere_abs_integral(s, g, rho),
        }
    }
}

/// Column-wise integration in colatitude: each interval between consecutive
/// latitude nodes gets an 8-point Gauss rule, and intervals where g changes
/// sign are split at the root so that every piece is smooth.
fn sphere_abs_integral(s: &SphereGrid, g: &[f64], rho: &[f64]) -> f64 {
    use crate::special::{gauss_legendre, legendre_normalized};
    let cg = s.analysis(g);
    let cr = s.analysis(rho);
    let (gx, gw) = gauss_legendre(8);
    let mut breaks = vec![1.0];
    breaks.extend(s.x.iter().cloned());
    breaks.push(-1.0);
    let nseg = breaks.len() - 1;
    // fixed fine nodes and per-m partial sums there
    let mut fine_x = Vec::with_capacity(nseg * gx.len());
    let mut fine_w = Vec::with_capacity(nseg * gx.len());
    for seg in breaks.windows(2) {
        let half = 0.5 * (seg[0] - seg[1]);
        let mid = 0.5 * (seg[0] + seg[1]);
        for (t, w) in gx.iter().zip(&gw) {
            fine_x.push(mid + half * t);
            fine_w.push(w * half);
        }
    }
    let partial = |c: &SphCoeffs, p: &[Vec<f64>]| -> Vec<Complex64> {
        (0..=s.band)
            .map(|m| {
                c.data[m]
                    .iter()
                    .zip(&p[m])
                    .fold(Complex64::new(0.0, 0.0), |acc, (a, p)| acc + a * *p)
            })
            .collect()
    };
    let mut pg = Vec::with_capacity(fine_x.len());
    let mut pr = Vec::with_capacity(fine_x.len());
    for &x in &fine_x {
        let p = legendre_normalized(s.band, x);
        pg.push(partial(&cg, &p));
        pr.push(partial(&cr, &p));
    }
    let sum_m = |parts: &[Complex64], lam: f64| -> f64 {
        parts.iter().enumerate().fold(0.0, |acc, (m, c)| {
            let v = (c * Complex64::from_polar(1.0, m as f64 * lam)).re;
            acc + if m == 0 { v } else { 2.0 * v }
        })
    };
    let eval = |x: f64, lam: f64| {
        let p = legendre_normalized(s.band, x);
        (s.evaluate_with(&cg, &p, lam), s.evaluate_with(&cr, &p, lam))
    };
    let piece = |a: f64, b: f64, lam: f64| -> f64 {
        let half = 0.5 * (a - b);
        let mid = 0.5 * (a + b);
        gx.iter()
            .zip(&gw)
            .map(|(t, w)| {
                let (gv, rv) = eval(mid + half * t, lam);
                w * half * gv.abs() * rv
            })
            .sum()
    };
    let dl = 2.0 * PI / s.nlon as f64;
    let mut total = 0.0;
    for k in 0..s.nlon {
        let lam = s.longitude(k);
        let mut ends = Vec::with_capacity(breaks.len());
        ends.push(eval(1.0, lam).0);
        ends.extend((0..s.nlat).map(|j| g[j * s.nlon + k]));
        ends.push(eval(-1.0, lam).0);
        let mut col = 0.0;
        for i in 0..nseg {
            let range = i * gx.len()..(i + 1) * gx.len();
            let gvals: Vec<f64> = range.clone().map(|f| sum_m(&pg[f], lam)).collect();
            let sign_change =
                ends[i] * ends[i + 1] < 0.0 || gvals.iter().any(|v| v * ends[i] < 0.0);
            if !sign_change {
                for (f, gv) in range.zip(&gvals) {
                    col += fine_w[f] * gv.abs() * sum_m(&pr[f], lam);
                }
                continue;
            }
            // locate the sign change(s) on a sub-sampling, then bisect
            let (a0, b0) = (breaks[i], breaks[i + 1]);
            let mut cuts = vec![a0];
            let nsub = 16;
            let mut xa = a0;
            let mut fa = ends[i];
            for q in 1..=nsub {
                let xb = a0 + (b0 - a0) * q as f64 / nsub as f64;
                let fb = if q == nsub {
                    ends[i + 1]
                } else {
                    eval(xb, lam).0
                };
                if fa * fb < 0.0 {
                    let (mut lo, mut hi, mut flo) = (xa, xb, fa);
                    for _ in 0..60 {
                        let m = 0.5 * (lo + hi);
                        let fm = eval(m, lam).0;
                        if fm * flo > 0.0 {
                            lo = m;
                            flo = fm;
                        } else {
                            hi = m;
                        }
                        if (lo - hi).abs() < 1e-15 {
                            break;
                        }
                    }
                    cuts.push(0.5 * (lo + hi));
                }
                xa = xb;
                fa = fb;
            }
            cuts.push(b0);
            for c in cuts.windows(2) {
                col += piece(c[0], c[1], lam);
            }
        }
        total += col * dl;
    }
    total * s.radius2
}

impl BackgroundGeometry {
    /// Smooth field with random modes up to `kmax` (|k| ≤ kmax on the torus,
    /// 1 ≤ l ≤ kmax on the sphere), no constant mode, damped like 1/(1 + |k|²)
    /// and scaled to sup-norm `amp`. `draw` supplies uniform samples in [−1, 1).
    pub fn band_limited_field(
        &self,
        kmax: usize,
        amp: f64,
        draw: &mut dyn FnMut() -> f64,
    ) -> ScalarField {
        let mut u = match &self.grid {
            Grid::Torus(t) => {
                let n = t.n as i64;
                let mut c = vec![Complex64::new(0.0, 0.0); t.n * t.n];
                let k = kmax as i64;
                for a in -k..=k {
                    for b in -k..=k {
                        if a == 0 && b == 0 {
                            continue;
                        }
                        let decay = 1.0 / (1.0 + (a * a + b * b) as f64);
                        let re = draw();
                        let im = draw();
                        let z = Complex64::new(re, im) * decay;
                        let idx = |x: i64, y: i64| (y.rem_euclid(n) * n + x.rem_euclid(n)) as usize;
                        c[idx(a, b)] += z;
                        c[idx(-a, -b)] += z.conj();
                    }
                }
                t.inverse(c)
            }
            Grid::Sphere(s) => {
                let mut c = SphCoeffs::zeros(s.band);
                for l in 1..=kmax.min(s.band) {
                    for m in 0..=l {
                        let decay = 1.0 / (1.0 + (l * l) as f64);
                        let im = if m == 0 { 0.0 } else { draw() };
                        c.data[m][l - m] = Complex64::new(draw(), im) * decay;
                    }
                }
                s.synthesis(&c)
            }
        };
        let sup = crate::linalg::sup_norm(&u).max(1e-300);
        u.iter_mut().for_each(|v| *v *= amp / sup);
        u
    }
}

#[cfg(test)]
mod tests;
