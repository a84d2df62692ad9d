use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Periodic n×n grid on a flat torus C/Λ with Λ = s(Z + τZ), area V.
#[derive(Clone)]
pub struct TorusGrid {
    pub n: usize,
    pub modulus: Complex64,
    /// Lattice generators in the plane.
    pub e1: [f64; 2],
    pub e2: [f64; 2],
    /// Dual basis, g_i · e_j = δ_ij.
    pub g1: [f64; 2],
    pub g2: [f64; 2],
    eig: Vec<f64>,
    kx: Vec<f64>,
    ky: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TorusGrid")
            .field("n", &self.n)
            .field("modulus", &self.modulus)
            .finish()
    }
}

fn freq(idx: usize, n: usize) -> (f64, bool) {
    let k = if idx <= n / 2 {
        idx as f64
    } else {
        idx as f64 - n as f64
    };
    (k, n.is_multiple_of(2) && idx == n / 2)
}

impl TorusGrid {
    pub fn new(modulus: Complex64, volume: f64, n: usize) -> Self {
        let s = (volume / modulus.im).sqrt();
        let e1 = [s, 0.0];
        let e2 = [s * modulus.re, s * modulus.im];
        let det = e1[0] * e2[1] - e1[1] * e2[0];
        let g1 = [e2[1] / det, -e2[0] / det];
        let g2 = [-e1[1] / det, e1[0] / det];
        let mut eig = vec![0.0; n * n];
        let mut kx = vec![0.0; n * n];
        let mut ky = vec![0.0; n * n];
        for i in 0..n {
            let (k2, nyq2) = freq(i, n);
            for j in 0..n {
                let (k1, nyq1) = freq(j, n);
                let wave = |a: f64, b: f64| {
                    [
                        2.0 * PI * (a * g1[0] + b * g2[0]),
                        2.0 * PI * (a * g1[1] + b * g2[1]),
                    ]
                };
                // symmetrize over the sign ambiguity of Nyquist indices
                let s1: &[f64] = if nyq1 { &[1.0, -1.0] } else { &[1.0] };
                let s2: &[f64] = if nyq2 { &[1.0, -1.0] } else { &[1.0] };
                let mut acc = 0.0;
                for a in s1 {
                    for b in s2 {
                        let k = wave(a * k1, b * k2);
                        acc += k[0] * k[0] + k[1] * k[1];
                    }
                }
                eig[i * n + j] = acc / (s1.len() * s2.len()) as f64;
                if !nyq1 && !nyq2 {
                    let k = wave(k1, k2);
                    kx[i * n + j] = k[0];
                    ky[i * n + j] = k[1];
                }
            }
        }
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        Self {
            n,
            modulus,
            e1,
            e2,
            g1,
            g2,
            eig,
            kx,
            ky,
            fwd,
            inv,
        }
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eig
    }

    pub fn node_position(&self, idx: usize) -> [f64; 2] {
        let (i, j) = (idx / self.n, idx % self.n);
        let a = j as f64 / self.n as f64;
        let b = i as f64 / self.n as f64;
        [
            a * self.e1[0] + b * self.e2[0],
            a * self.e1[1] + b * self.e2[1],
        ]
    }

    pub fn lattice_coords(&self, p: [f64; 2]) -> [f64; 2] {
        [
            p[0] * self.g1[0] + p[1] * self.g1[1],
            p[0] * self.g2[0] + p[1] * self.g2[1],
        ]
    }

    /// Reduce a planar point into the fundamental parallelogram.
    pub fn reduce(&self, p: [f64; 2]) -> [f64; 2] {
        let s = self.lattice_coords(p);
        let a = s[0] - s[0].floor();
        let b = s[1] - s[1].floor();
        [
            a * self.e1[0] + b * self.e2[0],
            a * self.e1[1] + b * self.e2[1],
        ]
    }

    /// Shortest displacement q - p modulo the lattice.
    pub fn displacement(&self, p: [f64; 2], q: [f64; 2]) -> [f64; 2] {
        let d = [q[0] - p[0], q[1] - p[1]];
        let s = self.lattice_coords(d);
        let a0 = s[0] - s[0].round();
        let b0 = s[1] - s[1].round();
        let mut best = [0.0, 0.0];
        let mut best_r = f64::INFINITY;
        for da in -1..=1 {
            for db in -1..=1 {
                let a = a0 + da as f64;
                let b = b0 + db as f64;
                let v = [
                    a * self.e1[0] + b * self.e2[0],
                    a * self.e1[1] + b * self.e2[1],
                ];
                let r = v[0] * v[0] + v[1] * v[1];
                if r < best_r {
                    best_r = r;
                    best = v;
                }
            }
        }
        best
    }

    pub fn distance(&self, p: [f64; 2], q: [f64; 2]) -> f64 {
        let d = self.displacement(p, q);
        d[0].hypot(d[1])
    }

    fn fft2(&self, data: &mut [Complex64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        plan.process(data);
        let mut t = vec![Complex64::new(0.0, 0.0); n * n];
        transpose(data, &mut t, n);
        plan.process(&mut t);
        transpose(&t, data, n);
    }

    pub fn forward(&self, u: &[f64]) -> Vec<Complex64> {
        let mut c: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fft2(&mut c, false);
        c
    }

    pub fn inverse(&self, mut c: Vec<Complex64>) -> Vec<f64> {
        self.fft2(&mut c, true);
        let s = 1.0 / (self.n * self.n) as f64;
        c.iter().map(|v| v.re * s).collect()
    }

    pub fn apply_multiplier<F: Fn(f64) -> f64>(&self, u: &[f64], m: F) -> Vec<f64> {
        let mut c = self.forward(u);
        for (c, &l) in c.iter_mut().zip(&self.eig) {
            *c *= m(l);
        }
        self.inverse(c)
    }

    pub fn gradient(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let c = self.forward(u);
        let i = Complex64::new(0.0, 1.0);
        let cx: Vec<Complex64> = c.iter().zip(&self.kx).map(|(c, k)| c * i * *k).collect();
        let cy: Vec<Complex64> = c.iter().zip(&self.ky).map(|(c, k)| c * i * *k).collect();
        (self.inverse(cx), self.inverse(cy))
    }

    /// Band-limited interpolation at an arbitrary planar point.
    pub fn interpolate_coeffs(&self, c: &[Complex64], p: [f64; 2]) -> f64 {
        let n = self.n;
        let s = self.lattice_coords(p);
        let phase = |idx: usize, x: f64| -> Complex64 {
            let (k, nyq) = freq(idx, n);
            if nyq {
                Complex64::new((2.0 * PI * k * x).cos(), 0.0)
            } else {
                Complex64::from_polar(1.0, 2.0 * PI * k * x)
            }
        };
        let p1: Vec<Complex64> = (0..n).map(|j| phase(j, s[0])).collect();
        let p2: Vec<Complex64> = (0..n).map(|i| phase(i, s[1])).collect();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..n {
                row += c[i * n + j] * p1[j];
            }
            acc += row * p2[i];
        }
        acc.re / (n * n) as f64
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            dst[j * n + i] = src[i * n + j];
        }
    }
}
