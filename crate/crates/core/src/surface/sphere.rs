use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::special::{gauss_legendre, legendre_normalized, legendre_normalized_dtheta};

/// Gauss-Legendre × uniform-longitude grid with band limit L.
///
/// Rows are latitudes ordered by increasing colatitude, columns are
/// longitudes 2πk/nlon. Transforms use an FFT along each latitude circle and
/// dense associated-Legendre sums in colatitude.
#[derive(Clone)]
pub struct SphereGrid {
    pub band: usize,
    pub nlat: usize,
    pub nlon: usize,
    pub radius2: f64,
    /// cos(colatitude) of each row.
    pub x: Vec<f64>,
    pub sin: Vec<f64>,
    pub gauss_w: Vec<f64>,
    plm: Vec<Vec<f64>>,
    dplm: Vec<Vec<f64>>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    fine: Arc<OnceLock<SphereGrid>>,
}

impl fmt::Debug for SphereGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SphereGrid")
            .field("band", &self.band)
            .field("radius2", &self.radius2)
            .finish()
    }
}

/// Spectral coefficients a_{lm}, m ≥ 0, stored by m then l.
#[derive(Clone, Debug)]
pub struct SphCoeffs {
    pub band: usize,
    pub data: Vec<Vec<Complex64>>,
}

impl SphCoeffs {
    pub fn zeros(band: usize) -> Self {
        Self {
            band,
            data: (0..=band)
                .map(|m| vec![Complex64::new(0.0, 0.0); band + 1 - m])
                .collect(),
        }
    }

    pub fn get(&self, l: usize, m: usize) -> Complex64 {
        self.data[m][l - m]
    }

    /// Keep only degrees l ≤ `band`.
    pub fn truncate(&self, band: usize) -> Self {
        let mut out = Self::zeros(band);
        for m in 0..=band.min(self.band) {
            for l in m..=band.min(self.band) {
                out.data[m][l - m] = self.data[m][l - m];
            }
        }
        out
    }

    pub fn map_l<F: Fn(usize) -> f64>(&mut self, f: F) {
        for (m, col) in self.data.iter_mut().enumerate() {
            for (k, c) in col.iter_mut().enumerate() {
                *c *= f(m + k);
            }
        }
    }
}

impl SphereGrid {
    pub fn new(volume: f64, band: usize) -> Self {
        let nlat = band + 1;
        let nlon = 2 * band + 2;
        let (x, gauss_w) = gauss_legendre(nlat);
        let sin: Vec<f64> = x.iter().map(|x| (1.0 - x * x).sqrt()).collect();
        let mut plm: Vec<Vec<f64>> = (0..=band)
            .map(|m| vec![0.0; nlat * (band + 1 - m)])
            .collect();
        let mut dplm = plm.clone();
        for (j, &xj) in x.iter().enumerate() {
            let p = legendre_normalized(band, xj);
            let d = legendre_normalized_dtheta(&p, xj);
            for m in 0..=band {
                let w = band + 1 - m;
                plm[m][j * w..(j + 1) * w].copy_from_slice(&p[m]);
                dplm[m][j * w..(j + 1) * w].copy_from_slice(&d[m]);
            }
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(nlon);
        let inv = planner.plan_fft_inverse(nlon);
        Self {
            band,
            nlat,
            nlon,
            radius2: volume / (4.0 * PI),
            x,
            sin,
            gauss_w,
            plm,
            dplm,
            fwd,
            inv,
            fine: Arc::default(),
        }
    }

    /// Grid with three times the band limit, built on first use.
    pub fn oversampled(&self) -> &SphereGrid {
        self.fine
            .get_or_init(|| SphereGrid::new(4.0 * PI * self.radius2, 3 * self.band))
    }

    pub fn len(&self) -> usize {
        self.nlat * self.nlon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn area_weights(&self) -> Vec<f64> {
        let dl = 2.0 * PI / self.nlon as f64;
        let mut w = Vec::with_capacity(self.len());
        for j in 0..self.nlat {
            for _ in 0..self.nlon {
                w.push(self.gauss_w[j] * dl * self.radius2);
            }
        }
        w
    }

    pub fn longitude(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.nlon as f64
    }

    pub fn node_vector(&self, idx: usize) -> [f64; 3] {
        let (j, k) = (idx / self.nlon, idx % self.nlon);
        let lam = self.longitude(k);
        [self.sin[j] * lam.cos(), self.sin[j] * lam.sin(), self.x[j]]
    }

    pub fn analysis(&self, u: &[f64]) -> SphCoeffs {
        let (nlat, nlon, band) = (self.nlat, self.nlon, self.band);
        let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        let mut out = SphCoeffs::zeros(band);
        let scale = 1.0 / nlon as f64;
        for m in 0..=band {
            let w = band + 1 - m;
            let col = &mut out.data[m];
            let tab = &self.plm[m];
            for j in 0..nlat {
                let f = buf[j * nlon + m] * (scale * self.gauss_w[j]);
                let row = &tab[j * w..(j + 1) * w];
                for (c, p) in col.iter_mut().zip(row) {
                    *c += f * *p;
                }
            }
        }
        out
    }

    fn synthesis_with(&self, c: &SphCoeffs, dtheta: bool) -> Vec<f64> {
        let (nlat, nlon, band) = (self.nlat, self.nlon, self.band);
        let tables = if dtheta { &self.dplm } else { &self.plm };
        let mut buf = vec![Complex64::new(0.0, 0.0); nlat * nlon];
        for m in 0..=band {
            let w = band + 1 - m;
            let col = &c.data[m];
            let tab = &tables[m];
            for j in 0..nlat {
                let row = &tab[j * w..(j + 1) * w];
                let mut g = Complex64::new(0.0, 0.0);
                for (a, p) in col.iter().zip(row) {
                    g += a * *p;
                }
                if m == 0 {
                    buf[j * nlon] = Complex64::new(g.re, 0.0);
                } else {
                    buf[j * nlon + m] = g;
                    buf[j * nlon + nlon - m] = g.conj();
                }
            }
        }
        self.inv.process(&mut buf);
        buf.iter().map(|v| v.re).collect()
    }

    pub fn synthesis(&self, c: &SphCoeffs) -> Vec<f64> {
        self.synthesis_with(c, false)
    }

    pub fn apply_multiplier<F: Fn(f64) -> f64>(&self, u: &[f64], f: F) -> Vec<f64> {
        let mut c = self.analysis(u);
        let r2 = self.radius2;
        c.map_l(|l| f((l * (l + 1)) as f64 / r2));
        self.synthesis(&c)
    }

    /// Orthonormal-frame gradient components (∂_θ u, ∂_λ u / sin θ) / R.
    pub fn gradient(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let c = self.analysis(u);
        let r = self.radius2.sqrt();
        let mut ut = self.synthesis_with(&c, true);
        let mut cl = c.clone();
        for (m, col) in cl.data.iter_mut().enumerate() {
            for a in col.iter_mut() {
                *a *= Complex64::new(0.0, m as f64);
            }
        }
        let mut ul = self.synthesis(&cl);
        for j in 0..self.nlat {
            for k in 0..self.nlon {
                let i = j * self.nlon + k;
                ut[i] /= r;
                ul[i] /= r * self.sin[j];
            }
        }
        (ut, ul)
    }

    /// Evaluate a band-limited field from its coefficients at (cos θ, λ).
    pub fn evaluate(&self, c: &SphCoeffs, x: f64, lambda: f64) -> f64 {
        self.evaluate_with(c, &legendre_normalized(self.band, x), lambda)
    }

    #[allow(clippy::needless_range_loop)]
    pub fn evaluate_with(&self, c: &SphCoeffs, p: &[Vec<f64>], lambda: f64) -> f64 {
        let mut acc = 0.0;
        for m in 0..=self.band {
            let mut g = Complex64::new(0.0, 0.0);
            for (a, pl) in c.data[m].iter().zip(&p[m]) {
                g += a * *pl;
            }
            let e = Complex64::from_polar(1.0, m as f64 * lambda);
            let v = (g * e).re;
            acc += if m == 0 { v } else { 2.0 * v };
        }
        acc
    }

    /// Axisymmetric restriction: Legendre synthesis matrix P[j][l] = P̄_l(x_j)
    /// and its θ-derivative, for m = 0.
    pub fn zonal_tables(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let w = self.band + 1;
        let p = (0..self.nlat)
            .map(|j| self.plm[0][j * w..(j + 1) * w].to_vec())
            .collect();
        let d = (0..self.nlat)
            .map(|j| self.dplm[0][j * w..(j + 1) * w].to_vec())
            .collect();
        (p, d)
    }
}

/// Unit vector for a chart coordinate z = tan(θ/2)e^{iλ} (z = 0 is the north pole).
pub fn chart_to_vector(z: Complex64) -> [f64; 3] {
    let r2 = z.norm_sqr();
    let d = 1.0 + r2;
    [2.0 * z.re / d, 2.0 * z.im / d, (1.0 - r2) / d]
}

pub const SOUTH_POLE: [f64; 3] = [0.0, 0.0, -1.0];

/// Chart coordinate of a unit vector; `None` at the south pole.
pub fn vector_to_chart(v: [f64; 3]) -> Option<Complex64> {
    let d = 1.0 + v[2];
    if d < 1e-300 {
        None
    } else {
        Some(Complex64::new(v[0] / d, v[1] / d))
    }
}

/// Geodesic angle between unit vectors, accurate for nearby points.
pub fn angle(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    2.0 * (0.5 * d).min(1.0).asin()
}
