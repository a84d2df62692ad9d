//! Green function of Δ₀ with ΔG(p,·) = δ_p − 1/V and G ~ −(1/2π) log d near p.
//!
//! Torus: Ewald splitting. The short-range part is the lattice sum of
//! (1/4π)E1(r²/2σ²); the long-range part has closed-form Fourier
//! coefficients e^{−σ²|k|²/2}/(V|k|²).
//!
//! Sphere: H = −(1/4π) log(1 − cos γ)·χ(γ) with a C^∞ cutoff χ, plus a
//! spectral solve for the smooth remainder.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{BackgroundGeometry, Grid, Interpolant, ScalarField, SurfacePoint};
use crate::special::{expint_e1, smooth_step};

/// Value used at a node that coincides with the pole; −4π·cap = −745.
pub const GREEN_CAP: f64 = 745.0 / (4.0 * PI);

const CUT_IN: f64 = 0.1 * PI;
const CUT_OUT: f64 = 0.65 * PI;

#[derive(Clone, Debug)]
pub struct GreenFunction {
    pub pole: SurfacePoint,
    remainder: Interpolant,
    remainder_nodal: ScalarField,
    nodal: ScalarField,
    /// Continuum constant making ∫G ω₀ = 0 before discretization.
    offset: f64,
    /// Subtracted so that the quadrature mean of the nodal values is zero.
    shift: f64,
    sigma: f64,
}

impl GreenFunction {
    pub fn new(geom: &BackgroundGeometry, pole: SurfacePoint) -> Self {
        match &geom.grid {
            Grid::Torus(t) => {
                let n = t.n;
                let eig = t.eigenvalues();
                let kcut2 = (0..n * n)
                    .filter(|&i| i / n == n / 2 || i % n == n / 2)
                    .map(|i| eig[i])
                    .fold(f64::INFINITY, f64::min);
                let sigma = (74.0 / kcut2).sqrt();
                let p = match pole {
                    SurfacePoint::Plane(p) => p,
                    _ => unreachable!("torus Green function needs a planar point"),
                };
                let s = t.lattice_coords(p);
                let mut c = vec![Complex64::new(0.0, 0.0); n * n];
                let scale = (n * n) as f64 / geom.volume;
                for i in 0..n {
                    for j in 0..n {
                        let idx = i * n + j;
                        let k1 = if j <= n / 2 {
                            j as f64
                        } else {
                            j as f64 - n as f64
                        };
                        let k2 = if i <= n / 2 {
                            i as f64
                        } else {
                            i as f64 - n as f64
                        };
                        if idx == 0 || j == n / 2 || i == n / 2 {
                            continue;
                        }
                        let l = eig[idx];
                        let amp = scale * (-0.5 * sigma * sigma * l).exp() / l;
                        c[idx] = Complex64::from_polar(amp, -2.0 * PI * (k1 * s[0] + k2 * s[1]));
                    }
                }
                let long = t.inverse(c.clone());
                let offset = 0.5 * sigma * sigma / geom.volume;
                let mut g = Self {
                    pole,
                    remainder: Interpolant::Torus(c),
                    remainder_nodal: long,
                    nodal: Vec::new(),
                    offset,
                    shift: 0.0,
                    sigma,
                };
                let mut nodal: Vec<f64> = (0..n * n)
                    .map(|i| {
                        g.short_range(geom, &SurfacePoint::Plane(t.node_position(i)))
                            + g.remainder_nodal[i]
                    })
                    .map(|v| (v - offset).min(GREEN_CAP))
                    .collect();
                g.shift = geom.mean(&nodal);
                nodal.iter_mut().for_each(|v| *v -= g.shift);
                g.nodal = nodal;
                g
            }
            Grid::Sphere(s) => {
                let q = match pole {
                    SurfacePoint::Sphere(q) => q,
                    _ => unreachable!("sphere Green function needs a unit vector"),
                };
                let v = geom.volume;
                // the cutoff is not band-limited: form the source on a finer grid
                let fine = s.oversampled();
                let rhs: Vec<f64> = (0..fine.len())
                    .map(|i| {
                        -1.0 / v - bump_source(super::sphere::angle(q, fine.node_vector(i))) / v
                    })
                    .collect();
                let mut c = fine.analysis(&rhs).truncate(s.band);
                c.data[0][0] = Complex64::new(0.0, 0.0);
                let r2 = s.radius2;
                c.map_l(|l| {
                    if l > 0 {
                        r2 / (l * (l + 1)) as f64
                    } else {
                        0.0
                    }
                });
                let rem = s.synthesis(&c);
                let mut nodal: Vec<f64> = (0..geom.len())
                    .zip(&rem)
                    .map(|(i, r)| {
                        (singular(super::sphere::angle(q, s.node_vector(i))) + r).min(GREEN_CAP)
                    })
                    .collect();
                let shift = geom.mean(&nodal);
                nodal.iter_mut().for_each(|x| *x -= shift);
                Self {
                    pole,
                    remainder: Interpolant::Sphere(c),
                    remainder_nodal: rem,
                    nodal,
                    offset: 0.0,
                    shift,
                    sigma: 0.0,
                }
            }
        }
    }

    fn short_range(&self, geom: &BackgroundGeometry, x: &SurfacePoint) -> f64 {
        let (t, p, x) = match (&geom.grid, self.pole, x) {
            (Grid::Torus(t), SurfacePoint::Plane(p), SurfacePoint::Plane(x)) => (t, p, *x),
            _ => return f64::NAN,
        };
        let d = t.displacement(p, x);
        let s2 = 2.0 * self.sigma * self.sigma;
        let rmax = (40.0 * s2).sqrt();
        let gmax = (t.g1[0].hypot(t.g1[1])).max(t.g2[0].hypot(t.g2[1]));
        let reach = (rmax * gmax).ceil() as i64 + 1;
        let mut acc = 0.0;
        for a in -reach..=reach {
            for b in -reach..=reach {
                let v = [
                    d[0] + a as f64 * t.e1[0] + b as f64 * t.e2[0],
                    d[1] + a as f64 * t.e1[1] + b as f64 * t.e2[1],
                ];
                let r2 = v[0] * v[0] + v[1] * v[1];
                let arg = r2 / s2;
                if arg < 40.0 {
                    acc += expint_e1(arg) / (4.0 * PI);
                }
            }
        }
        acc
    }

    /// Nodal values, quadrature-mean zero.
    pub fn values(&self) -> &[f64] {
        &self.nodal
    }

    pub fn into_values(self) -> ScalarField {
        self.nodal
    }

    /// G(p, x) at an arbitrary point, consistent with the nodal values.
    pub fn evaluate(&self, geom: &BackgroundGeometry, x: &SurfacePoint) -> f64 {
        match (&geom.grid, x) {
            (Grid::Torus(_), SurfacePoint::Plane(_)) => {
                let long = geom.evaluate(&self.remainder, x);
                (self.short_range(geom, x) + long - self.offset).min(GREEN_CAP) - self.shift
            }
            (Grid::Sphere(_), SurfacePoint::Sphere(v)) => {
                let q = match self.pole {
                    SurfacePoint::Sphere(q) => q,
                    _ => return f64::NAN,
                };
                let g = super::sphere::angle(q, *v);
                (singular(g) + geom.evaluate(&self.remainder, x)).min(GREEN_CAP) - self.shift
            }
            _ => f64::NAN,
        }
    }

    /// ∫ G(p,·) h ω₀ for a smooth mean-zero h, with the singular part
    /// integrated in geodesic polar coordinates around the pole.
    pub fn integrate_against(&self, geom: &BackgroundGeometry, h: &[f64]) -> f64 {
        use crate::special::gauss_legendre;
        let hc = geom.interpolant(h);
        let (gx, gw) = gauss_legendre(64);
        let nang = 96;
        match (&geom.grid, self.pole) {
            (Grid::Torus(t), SurfacePoint::Plane(p)) => {
                // long-range part is smooth: plain quadrature
                let mut total = geom.inner(&self.remainder_nodal, h);
                // short-range part: finitely supported radial kernel at the pole;
                // the periodic images are folded in by integrating over the plane
                let s2 = 2.0 * self.sigma * self.sigma;
                let rmax = (40.0 * s2).sqrt();
                // r = rmax·u², dr = 2 rmax u du removes the log singularity
                for (u, wu) in gx.iter().zip(&gw) {
                    let uu = 0.5 * (u + 1.0);
                    let r = rmax * uu * uu;
                    let jac = 0.5 * wu * 2.0 * rmax * uu * r;
                    let kern = expint_e1(r * r / s2) / (4.0 * PI);
                    let mut ring = 0.0;
                    for a in 0..nang {
                        let th = 2.0 * PI * a as f64 / nang as f64;
                        let x = t.reduce([p[0] + r * th.cos(), p[1] + r * th.sin()]);
                        ring += geom.evaluate(&hc, &SurfacePoint::Plane(x));
                    }
                    total += jac * kern * ring * 2.0 * PI / nang as f64;
                }
                total - (self.offset + self.shift) * geom.integrate(h)
            }
            (Grid::Sphere(s), SurfacePoint::Sphere(q)) => {
                let mut total = geom.inner(&self.remainder_nodal, h);
                // orthonormal frame at the pole
                let a = if q[2].abs() < 0.9 {
                    [0.0, 0.0, 1.0]
                } else {
                    [1.0, 0.0, 0.0]
                };
                let e1 = normalize(cross(q, a));
                let e2 = cross(q, e1);
                let gmax = CUT_OUT;
                for (u, wu) in gx.iter().zip(&gw) {
                    let uu = 0.5 * (u + 1.0);
                    let g = gmax * uu * uu;
                    let jac = 0.5 * wu * 2.0 * gmax * uu * g.sin() * s.radius2;
                    let kern = singular(g);
                    let mut ring = 0.0;
                    for k in 0..nang {
                        let th = 2.0 * PI * k as f64 / nang as f64;
                        let dir = [
                            e1[0] * th.cos() + e2[0] * th.sin(),
                            e1[1] * th.cos() + e2[1] * th.sin(),
                            e1[2] * th.cos() + e2[2] * th.sin(),
                        ];
                        let x = [
                            q[0] * g.cos() + dir[0] * g.sin(),
                            q[1] * g.cos() + dir[1] * g.sin(),
                            q[2] * g.cos() + dir[2] * g.sin(),
                        ];
                        ring += geom.evaluate(&hc, &SurfacePoint::Sphere(x));
                    }
                    total += jac * kern * ring * 2.0 * PI / nang as f64;
                }
                total - (self.offset + self.shift) * geom.integrate(h)
            }
            _ => f64::NAN,
        }
    }
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(a: [f64; 3]) -> [f64; 3] {
    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

fn cutoff(g: f64) -> (f64, f64, f64) {
    let w = CUT_OUT - CUT_IN;
    let (s, s1, s2) = smooth_step((g - CUT_IN) / w);
    (1.0 - s, -s1 / w, -s2 / (w * w))
}

/// log(1 − cos γ) with its first derivative.
fn log_chord(g: f64) -> (f64, f64) {
    let h = 0.5 * g;
    (
        std::f64::consts::LN_2 + 2.0 * h.sin().ln(),
        h.cos() / h.sin(),
    )
}

fn singular(g: f64) -> f64 {
    if g <= 0.0 {
        return f64::INFINITY;
    }
    let (c, _, _) = cutoff(g);
    if c == 0.0 {
        return 0.0;
    }
    -log_chord(g).0 * c / (4.0 * PI)
}

/// V·(Δ₀H − δ) as a function of the angle to the pole.
fn bump_source(g: f64) -> f64 {
    let (c, c1, c2) = cutoff(g);
    if c1 == 0.0 && c2 == 0.0 {
        return -c;
    }
    let (l, l1) = log_chord(g);
    -c + l * (c2 + c1 * g.cos() / g.sin()) + 2.0 * l1 * c1
}
