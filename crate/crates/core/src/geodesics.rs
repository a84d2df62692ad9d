//! Geodesics in the space of Kähler potentials on the round sphere: the
//! rays generated by the C* action z ↦ e^{2t}z, axisymmetric ε-geodesics,
//! path lengths and the reduced α-K-energy along rays.
//!
//! Ray quantities are written in x = cos θ with z = tan(θ/2)e^{iλ}, so that
//! the chart origin is the north pole x = 1.

use std::f64::consts::PI;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::energy::{m_alpha_pair, sigma_pair_density};
use crate::error::{Error, Result};
use crate::higgs::{pullback_higgs, HiggsData};
use crate::linalg::sup_norm;
use crate::surface::sphere::SphereGrid;
use crate::surface::{BackgroundGeometry, ScalarField};
use crate::vortex::{solve_vortex, VortexProblem};

pub const MAX_GEODESIC_NEWTON: usize = 100;

/// Geodesic ray φ_t = (V/4π)(log((1 + e^{4t}|z|²)/(1 + |z|²)) − 2t) + bt,
/// generated by Re(4z∂/∂z). ω_{φ_t} is the pullback of ω₀ by z ↦ e^{2t}z.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OnePSRay {
    pub volume: f64,
    pub shift: f64,
}

impl OnePSRay {
    pub const GENERATOR: &'static str = "Re(4z d/dz)";

    pub fn new(volume: f64, shift: f64) -> Result<Self> {
        if !(volume > 0.0) || !volume.is_finite() || !shift.is_finite() {
            return Err(Error::InvalidInput(format!(
                "ray needs V > 0 and finite b, got V = {volume}, b = {shift}"
            )));
        }
        Ok(Self { volume, shift })
    }

    pub fn for_geometry(geom: &BackgroundGeometry, shift: f64) -> Result<Self> {
        sphere_of(geom)?;
        Self::new(geom.volume, shift)
    }

    fn check<'g>(&self, geom: &'g BackgroundGeometry) -> Result<&'g SphereGrid> {
        let s = sphere_of(geom)?;
        if (geom.volume - self.volume).abs() > 1e-12 * self.volume {
            return Err(Error::InvalidInput(format!(
                "ray volume {} differs from surface volume {}",
                self.volume, geom.volume
            )));
        }
        Ok(s)
    }

    /// log(D/2) with D = e^{2t}(1 − x) + e^{−2t}(1 + x), without overflow.
    fn log_half_d(t: f64, x: f64) -> f64 {
        let a = 2.0 * t + (1.0 - x).ln();
        let b = -2.0 * t + (1.0 + x).ln();
        let m = a.max(b);
        m + ((a - m).exp() + (b - m).exp()).ln() - std::f64::consts::LN_2
    }

    pub fn potential_at(&self, t: f64, x: f64) -> f64 {
        self.volume / (4.0 * PI) * Self::log_half_d(t, x) + self.shift * t
    }

    pub fn velocity_at(&self, t: f64, x: f64) -> f64 {
        self.volume / (2.0 * PI) * (2.0 * t - x.atanh()).tanh() + self.shift
    }

    pub fn acceleration_at(&self, t: f64, x: f64) -> f64 {
        let s = 1.0 / (2.0 * t - x.atanh()).cosh();
        self.volume / PI * s * s
    }

    /// ω_{φ_t}/ω₀ = 4/D².
    pub fn conformal_factor_at(&self, t: f64, x: f64) -> f64 {
        (-2.0 * Self::log_half_d(t, x)).exp()
    }

    fn field(&self, geom: &BackgroundGeometry, f: impl Fn(f64) -> f64) -> Result<ScalarField> {
        let s = self.check(geom)?;
        let mut out = Vec::with_capacity(s.len());
        for &x in &s.x {
            let v = f(x);
            out.extend(std::iter::repeat_n(v, s.nlon));
        }
        Ok(out)
    }

    pub fn potential(&self, geom: &BackgroundGeometry, t: f64) -> Result<ScalarField> {
        self.field(geom, |x| self.potential_at(t, x))
    }

    pub fn velocity(&self, geom: &BackgroundGeometry, t: f64) -> Result<ScalarField> {
        self.field(geom, |x| self.velocity_at(t, x))
    }

    pub fn acceleration(&self, geom: &BackgroundGeometry, t: f64) -> Result<ScalarField> {
        self.field(geom, |x| self.acceleration_at(t, x))
    }

    pub fn conformal_factor(&self, geom: &BackgroundGeometry, t: f64) -> Result<ScalarField> {
        self.field(geom, |x| self.conformal_factor_at(t, x))
    }

    /// ∫|φ̇₀|ω₀, the constant speed of the ray in the d₁ metric.
    pub fn speed(&self, geom: &BackgroundGeometry) -> Result<f64> {
        let v = self.velocity(geom, 0.0)?;
        Ok(geom.integrate_abs(&v, &geom.constant(1.0)))
    }

    /// d/dt J_{ω₀}(φ_t) = ∫φ̇_t(ω₀ − ω_t), with ∫φ̇_tω_t = ∫φ̇₀ω₀ moved to the
    /// initial frame.
    pub fn j_slope(&self, geom: &BackgroundGeometry, t: f64) -> Result<f64> {
        let vt = self.velocity(geom, t)?;
        let v0 = self.velocity(geom, 0.0)?;
        Ok(geom.integrate(&vt) - geom.integrate(&v0))
    }
}

fn sphere_of(geom: &BackgroundGeometry) -> Result<&SphereGrid> {
    geom.sphere()
        .ok_or_else(|| Error::InvalidGeometry("1-PS rays live on the sphere".into()))
}

pub fn fs_ray_potential(geom: &BackgroundGeometry, t: f64, b: f64) -> Result<ScalarField> {
    OnePSRay::for_geometry(geom, b)?.potential(geom, t)
}

pub fn fs_ray_velocity(geom: &BackgroundGeometry, t: f64, b: f64) -> Result<ScalarField> {
    OnePSRay::for_geometry(geom, b)?.velocity(geom, t)
}

pub fn fs_ray_conformal_factor(geom: &BackgroundGeometry, t: f64) -> Result<ScalarField> {
    OnePSRay::for_geometry(geom, 0.0)?.conformal_factor(geom, t)
}

/// Pointwise φ̈ − |dφ̇|²_{ω_φ} from three samples spaced by `dt`, using central
/// differences in t.
pub fn geodesic_residual_field(
    geom: &BackgroundGeometry,
    prev: &[f64],
    cur: &[f64],
    next: &[f64],
    dt: f64,
) -> Result<ScalarField> {
    geom.check(prev)?;
    geom.check(cur)?;
    geom.check(next)?;
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!(
            "time step {dt} must be positive"
        )));
    }
    let w = geom.conformal_factor(cur)?;
    let vel: Vec<f64> = next
        .iter()
        .zip(prev)
        .map(|(a, b)| (a - b) / (2.0 * dt))
        .collect();
    let g2 = geom.grad_sq(&vel);
    Ok((0..cur.len())
        .map(|i| (next[i] - 2.0 * cur[i] + prev[i]) / (dt * dt) - g2[i] / w[i])
        .collect())
}

pub fn geodesic_residual(
    geom: &BackgroundGeometry,
    prev: &[f64],
    cur: &[f64],
    next: &[f64],
    dt: f64,
) -> Result<f64> {
    Ok(sup_norm(&geodesic_residual_field(
        geom, prev, cur, next, dt,
    )?))
}

/// Potentials sampled at increasing times.
#[derive(Clone, Debug, Default)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub kpots: Vec<ScalarField>,
}

impl PathSample {
    pub fn new(times: Vec<f64>, kpots: Vec<ScalarField>) -> Result<Self> {
        if times.len() != kpots.len() || times.len() < 2 {
            return Err(Error::InvalidInput(
                "a path needs at least two samples with matching times".into(),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("path times must increase".into()));
        }
        Ok(Self { times, kpots })
    }

    pub fn from_ray(geom: &BackgroundGeometry, ray: &OnePSRay, times: Vec<f64>) -> Result<Self> {
        let kpots = times
            .iter()
            .map(|t| ray.potential(geom, *t))
            .collect::<Result<Vec<_>>>()?;
        Self::new(times, kpots)
    }
}

/// Length ∫dt∫|φ̇_t|ω_{φ_t} of a sampled path, an upper bound for d₁ between
/// its endpoints. φ̇ is taken from second-order differences in t and the time
/// integral uses the trapezoid rule.
pub fn d1_path_length(geom: &BackgroundGeometry, path: &PathSample) -> Result<f64> {
    let n = path.times.len();
    if n < 2 {
        return Err(Error::InvalidInput(
            "a path needs at least two samples".into(),
        ));
    }
    for k in &path.kpots {
        geom.check(k)?;
    }
    let t = &path.times;
    let mut speed = Vec::with_capacity(n);
    for i in 0..n {
        let vel = time_derivative(t, &path.kpots, i);
        let w = geom.conformal_factor(&path.kpots[i])?;
        speed.push(geom.integrate_abs(&vel, &w));
    }
    Ok((1..n)
        .map(|i| 0.5 * (t[i] - t[i - 1]) * (speed[i] + speed[i - 1]))
        .sum())
}

/// Three-point derivative on a nonuniform grid (one-sided at the ends).
fn time_derivative(t: &[f64], u: &[ScalarField], i: usize) -> ScalarField {
    let n = t.len();
    if n == 2 {
        let h = t[1] - t[0];
        return u[1].iter().zip(&u[0]).map(|(a, b)| (a - b) / h).collect();
    }
    let (a, b, c) = if i == 0 {
        (0, 1, 2)
    } else if i == n - 1 {
        (n - 3, n - 2, n - 1)
    } else {
        (i - 1, i, i + 1)
    };
    let x = t[i];
    // derivatives of the Lagrange basis at x
    let la = ((x - t[b]) + (x - t[c])) / ((t[a] - t[b]) * (t[a] - t[c]));
    let lb = ((x - t[a]) + (x - t[c])) / ((t[b] - t[a]) * (t[b] - t[c]));
    let lc = ((x - t[a]) + (x - t[b])) / ((t[c] - t[a]) * (t[c] - t[b]));
    (0..u[i].len())
        .map(|k| la * u[a][k] + lb * u[b][k] + lc * u[c][k])
        .collect()
}

/// Axisymmetric solution of (φ″ − |dφ′|²_{ω_φ})ω_φ = εω₀ on t ∈ [0, 1].
#[derive(Clone, Debug)]
pub struct EpsilonGeodesic {
    pub epsilon: f64,
    pub times: Vec<f64>,
    /// Full-grid potentials, one per time node.
    pub kpots: Vec<ScalarField>,
    /// sup over interior nodes of |φ″ − |dφ′|²_{ω_φ} − ε ω₀/ω_φ|.
    pub residual_sup: f64,
    pub newton_iters: usize,
}

impl EpsilonGeodesic {
    pub fn path(&self) -> PathSample {
        PathSample {
            times: self.times.clone(),
            kpots: self.kpots.clone(),
        }
    }

    pub fn step(&self) -> f64 {
        self.times[1] - self.times[0]
    }
}

/// Dense zonal operators on the latitude nodes.
struct Zonal {
    nlat: usize,
    nlon: usize,
    lap: DMatrix<f64>,
    dtheta: DMatrix<f64>,
}

impl Zonal {
    fn new(s: &SphereGrid) -> Self {
        let (p, d) = s.zonal_tables();
        let nlat = s.nlat;
        let r = s.radius2.sqrt();
        let mut lap = DMatrix::zeros(nlat, nlat);
        let mut dtheta = DMatrix::zeros(nlat, nlat);
        for j in 0..nlat {
            for i in 0..nlat {
                let mut a = 0.0;
                let mut b = 0.0;
                for l in 0..=s.band {
                    let ev = (l * (l + 1)) as f64 / s.radius2;
                    a += p[j][l] * ev * p[i][l];
                    b += d[j][l] * p[i][l];
                }
                lap[(j, i)] = a * s.gauss_w[i];
                dtheta[(j, i)] = b * s.gauss_w[i] / r;
            }
        }
        Self {
            nlat,
            nlon: s.nlon,
            lap,
            dtheta,
        }
    }

    fn profile(&self, u: &[f64]) -> Result<DVector<f64>> {
        let mut v = DVector::zeros(self.nlat);
        let scale = 1.0 + sup_norm(u);
        for j in 0..self.nlat {
            let row = &u[j * self.nlon..(j + 1) * self.nlon];
            v[j] = row[0];
            if row.iter().any(|x| (x - row[0]).abs() > 1e-10 * scale) {
                return Err(Error::InvalidInput("endpoint is not axisymmetric".into()));
            }
        }
        Ok(v)
    }

    fn expand(&self, v: &DVector<f64>) -> ScalarField {
        let mut out = Vec::with_capacity(self.nlat * self.nlon);
        for j in 0..self.nlat {
            out.extend(std::iter::repeat_n(v[j], self.nlon));
        }
        out
    }
}

/// Residual F = wφ″ − (∂_θφ′)²/R² − ε at interior nodes, and the same divided by w.
fn eps_residual(z: &Zonal, phi: &[DVector<f64>], h: f64, eps: f64) -> (Vec<DVector<f64>>, f64) {
    let m = phi.len();
    let mut out = Vec::with_capacity(m - 2);
    let mut sup = 0.0_f64;
    for k in 1..m - 1 {
        let w = DVector::from_element(z.nlat, 1.0) - &z.lap * &phi[k];
        let acc = (&phi[k + 1] - &phi[k] * 2.0 + &phi[k - 1]) / (h * h);
        let gv = &z.dtheta * ((&phi[k + 1] - &phi[k - 1]) / (2.0 * h));
        let f = DVector::from_fn(z.nlat, |j, _| w[j] * acc[j] - gv[j] * gv[j] - eps);
        for j in 0..z.nlat {
            sup = sup.max((f[j] / w[j]).abs());
        }
        out.push(f);
    }
    (out, sup)
}

/// Solve the ε-geodesic equation between axisymmetric endpoints on M time
/// nodes by space-time Newton with a block-tridiagonal solve.
///
/// `init`, if given, is a full path of M potentials (endpoints are reset).
pub fn solve_epsilon_geodesic(
    geom: &BackgroundGeometry,
    start: &[f64],
    end: &[f64],
    epsilon: f64,
    m: usize,
    init: Option<&[ScalarField]>,
) -> Result<EpsilonGeodesic> {
    let s = sphere_of(geom)?;
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidInput(format!(
            "epsilon = {epsilon} must be positive"
        )));
    }
    if m < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 time nodes, got {m}"
        )));
    }
    geom.check(start)?;
    geom.check(end)?;
    geom.conformal_factor(start)?;
    geom.conformal_factor(end)?;
    let z = Zonal::new(s);
    let p0 = z.profile(start)?;
    let p1 = z.profile(end)?;
    let h = 1.0 / (m - 1) as f64;
    let times: Vec<f64> = (0..m).map(|k| k as f64 * h).collect();
    let initial: Vec<DVector<f64>> = match init {
        Some(path) => {
            if path.len() != m {
                return Err(Error::InvalidInput(format!(
                    "initial path has {} nodes, expected {m}",
                    path.len()
                )));
            }
            path.iter()
                .map(|u| geom.check(u).and_then(|_| z.profile(u)))
                .collect::<Result<Vec<_>>>()?
        }
        None => straight_path(&z, &p0, &p1, &times, epsilon),
    };
    let mut total = 0;
    let direct = newton_solve(&z, initial, &p0, &p1, h, epsilon);
    total += direct.iters;
    let (phi, sup) = match direct.solution {
        Some(x) => x,
        None => {
            // continuation in the far endpoint, starting from the trivial path
            let mut s = 0.0_f64;
            let mut ds = 0.25_f64;
            let mut phi = straight_path(&z, &p0, &p0, &times, epsilon);
            let mut sup = f64::INFINITY;
            let mut last = p0.clone();
            while s < 1.0 {
                let s_new = (s + ds).min(1.0);
                let end_new = &p0 * (1.0 - s_new) + &p1 * s_new;
                let guess: Vec<DVector<f64>> = phi
                    .iter()
                    .zip(&times)
                    .map(|(p, t)| p + (&end_new - &last) * *t)
                    .collect();
                let out = newton_solve(&z, guess, &p0, &end_new, h, epsilon);
                total += out.iters;
                match out.solution {
                    Some((p, sp)) => {
                        phi = p;
                        sup = sp;
                        last = end_new;
                        s = s_new;
                        ds = (1.5 * ds).min(0.5);
                    }
                    None => {
                        ds *= 0.5;
                        if ds < 1.0 / 512.0 {
                            return Err(Error::SolverFailed {
                                solver: "epsilon-geodesic Newton (try continuation in epsilon)",
                                iterations: total,
                                residual: out.residual,
                            });
                        }
                    }
                }
            }
            (phi, sup)
        }
    };
    Ok(EpsilonGeodesic {
        epsilon,
        times,
        kpots: phi.iter().map(|p| z.expand(p)).collect(),
        residual_sup: sup,
        newton_iters: total,
    })
}

/// Linear interpolation plus the ε-bump εt(t − 1)/2w.
fn straight_path(
    z: &Zonal,
    p0: &DVector<f64>,
    p1: &DVector<f64>,
    times: &[f64],
    epsilon: f64,
) -> Vec<DVector<f64>> {
    let w0 = DVector::from_element(z.nlat, 1.0) - &z.lap * p0;
    let w1 = DVector::from_element(z.nlat, 1.0) - &z.lap * p1;
    times
        .iter()
        .map(|&t| {
            let bump = 0.5 * epsilon * t * (t - 1.0);
            DVector::from_fn(z.nlat, |j, _| {
                (1.0 - t) * p0[j] + t * p1[j] + bump * 2.0 / (w0[j] + w1[j])
            })
        })
        .collect()
}

struct NewtonOutcome {
    solution: Option<(Vec<DVector<f64>>, f64)>,
    iters: usize,
    residual: f64,
}

fn newton_solve(
    z: &Zonal,
    mut phi: Vec<DVector<f64>>,
    p0: &DVector<f64>,
    p1: &DVector<f64>,
    h: f64,
    epsilon: f64,
) -> NewtonOutcome {
    let m = phi.len();
    phi[0] = p0.clone();
    phi[m - 1] = p1.clone();
    let positive = |path: &[DVector<f64>]| {
        path.iter().all(|p| {
            (DVector::from_element(z.nlat, 1.0) - &z.lap * p)
                .iter()
                .all(|w| *w > 0.0)
        })
    };
    if !positive(&phi) {
        return NewtonOutcome {
            solution: None,
            iters: 0,
            residual: f64::INFINITY,
        };
    }
    let (mut res, mut sup) = eps_residual(z, &phi, h, epsilon);
    let norm = |r: &[DVector<f64>]| r.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt();
    let mut iters = 0;
    while sup > 1e-11 * (1.0 + epsilon) && iters < MAX_GEODESIC_NEWTON {
        iters += 1;
        let Ok(step) = newton_step(z, &phi, h, &res) else {
            break;
        };
        let base = norm(&res);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<DVector<f64>> = phi
                .iter()
                .enumerate()
                .map(|(k, p)| {
                    if k == 0 || k == m - 1 {
                        p.clone()
                    } else {
                        p - &step[k - 1] * t
                    }
                })
                .collect();
            if positive(&trial) {
                let (r, sp) = eps_residual(z, &trial, h, epsilon);
                if norm(&r) < (1.0 - 1e-4 * t) * base {
                    phi = trial;
                    res = r;
                    sup = sp;
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let solution = if sup <= 1e-7 { Some((phi, sup)) } else { None };
    NewtonOutcome {
        solution,
        iters,
        residual: sup,
    }
}

/// Newton correction δ with J δ = F, by block Thomas elimination.
fn newton_step(
    z: &Zonal,
    phi: &[DVector<f64>],
    h: f64,
    res: &[DVector<f64>],
) -> Result<Vec<DVector<f64>>> {
    let m = phi.len();
    let n = m - 2;
    let nl = z.nlat;
    let mut gs: Vec<DMatrix<f64>> = Vec::with_capacity(n);
    let mut ds: Vec<DVector<f64>> = Vec::with_capacity(n);
    for b in 0..n {
        let k = b + 1;
        let w = DVector::from_element(nl, 1.0) - &z.lap * &phi[k];
        let acc = (&phi[k + 1] - &phi[k] * 2.0 + &phi[k - 1]) / (h * h);
        let gv = &z.dtheta * ((&phi[k + 1] - &phi[k - 1]) / (2.0 * h));
        // diagonal block: −2w/h² − diag(φ″)Δ
        let mut diag = -DMatrix::from_diagonal(&acc) * &z.lap;
        for j in 0..nl {
            diag[(j, j)] -= 2.0 * w[j] / (h * h);
        }
        let cross = DMatrix::from_diagonal(&gv) * &z.dtheta / h;
        let wdiag = DMatrix::from_diagonal(&w) / (h * h);
        let lower = &wdiag + &cross;
        let upper = &wdiag - &cross;
        let mut rhs = res[b].clone();
        if let Some(gprev) = gs.last() {
            diag -= &lower * gprev;
            rhs -= &lower * &ds[b - 1];
        }
        let lu = diag.lu();
        let g = lu.solve(&upper).ok_or_else(singular)?;
        let d = lu.solve(&rhs).ok_or_else(singular)?;
        gs.push(g);
        ds.push(d);
    }
    let mut x = vec![DVector::zeros(nl); n];
    x[n - 1] = ds[n - 1].clone();
    for b in (0..n - 1).rev() {
        x[b] = &ds[b] - &gs[b] * &x[b + 1];
    }
    Ok(x)
}

fn singular() -> Error {
    Error::SolverFailed {
        solver: "epsilon-geodesic block solve",
        iterations: 0,
        residual: f64::INFINITY,
    }
}

/// Interior residual of the ε-geodesic equation for an arbitrary ε, in the
/// form φ″ − |dφ′|²_{ω_φ} − εω₀/ω_φ.
pub fn epsilon_residual(
    geom: &BackgroundGeometry,
    path: &EpsilonGeodesic,
    epsilon: f64,
) -> Result<f64> {
    let z = Zonal::new(sphere_of(geom)?);
    let phi = path
        .kpots
        .iter()
        .map(|u| z.profile(u))
        .collect::<Result<Vec<_>>>()?;
    Ok(eps_residual(&z, &phi, path.step(), epsilon).1)
}

/// Worker count for independent per-sample solves; 0 means all cores.
fn worker_count(threads: usize, jobs: usize) -> usize {
    let n = if threads == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    } else {
        threads
    };
    n.clamp(1, jobs.max(1))
}

/// Evaluate `f` on every index, spreading work over `threads` workers.
/// Results are placed by index, so the output does not depend on scheduling.
pub(crate) fn par_map<T: Send>(
    jobs: usize,
    threads: usize,
    f: impl Fn(usize) -> T + Sync,
) -> Vec<T> {
    let workers = worker_count(threads, jobs);
    if workers == 1 {
        return (0..jobs).map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<T>> = (0..jobs).map(|_| None).collect();
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|sc| {
        for _ in 0..workers {
            sc.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= jobs {
                    break;
                }
                let v = f(i);
                results.lock().unwrap()[i] = Some(v);
            });
        }
    });
    slots
        .into_iter()
        .map(|v| v.expect("every job ran"))
        .collect()
}

/// M_α(f_t, φ_t) at every node of a path, with f_t the vortex solution.
pub fn m_alpha_along(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    path: &PathSample,
    threads: usize,
) -> Result<Vec<f64>> {
    par_map(path.kpots.len(), threads, |i| {
        let kpot = &path.kpots[i];
        let p = VortexProblem::new(geom, higgs, tau, kpot.clone())?;
        let sol = solve_vortex(&p, None)?;
        Ok(m_alpha_pair(geom, higgs, alpha, tau, &sol.f, kpot))
    })
    .into_iter()
    .collect()
}

/// Second differences (u_{k+1} − 2u_k + u_{k−1})/h² at interior nodes.
pub fn second_differences(u: &[f64], h: f64) -> Vec<f64> {
    u.windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]) / (h * h))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayPoint {
    pub t: f64,
    pub k_alpha: f64,
    pub k_alpha_prime: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RayProfile {
    pub points: Vec<RayPoint>,
}

impl RayProfile {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,k_alpha,k_alpha_prime\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{:.17e},{:.17e},{:.17e}",
                p.t, p.k_alpha, p.k_alpha_prime
            );
        }
        s
    }

    /// Minimum second difference of K_α over consecutive triples, scaled by
    /// the local spacing.
    pub fn min_second_difference(&self) -> f64 {
        self.points
            .windows(3)
            .map(|w| {
                let (h0, h1) = (w[1].t - w[0].t, w[2].t - w[1].t);
                ((w[2].k_alpha - w[1].k_alpha) / h1 - (w[1].k_alpha - w[0].k_alpha) / h0)
                    / (0.5 * (h0 + h1))
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// Vortex solution for the divisor pulled back along the ray, on the fixed ω₀.
fn pulled_back_vortex(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    tau: f64,
    t: f64,
) -> Result<(HiggsData, ScalarField)> {
    let h = pullback_higgs(geom, higgs, t)?;
    let p = VortexProblem::flat(geom, &h, tau)?;
    let f = solve_vortex(&p, None)?.f;
    Ok((h, f))
}

/// K_α′(t) along the ray from the round metric, computed in the pulled-back
/// frame: −∫φ̇₀(Ric ω₀ − 2αi∂∂̄|φ(t)|² − 2ατiF − cω₀) on the fixed ω₀ with
/// the flowed divisor.
pub fn ray_k_alpha_prime(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    t: f64,
) -> Result<f64> {
    let ray = OnePSRay::for_geometry(geom, 0.0)?;
    let v0 = ray.velocity(geom, 0.0)?;
    let (h, f) = pulled_back_vortex(geom, higgs, tau, t).map_err(|e| at_time(e, t))?;
    let zero = geom.constant(0.0);
    let sigma = sigma_pair_density(geom, &h, alpha, tau, &f, &zero)?;
    Ok(geom.inner(&v0, &sigma))
}

fn at_time(e: Error, t: f64) -> Error {
    match e {
        Error::SolverFailed { solver, iterations, residual } => Error::InvalidInput(format!(
            "vortex solve failed at t = {t}: {solver} after {iterations} iterations (residual {residual:.3e})"
        )),
        other => other,
    }
}

/// K_α at t = 0 (the round metric itself).
fn k_alpha_at_origin(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
) -> Result<f64> {
    let zero = geom.constant(0.0);
    let p = VortexProblem::flat(geom, higgs, tau)?;
    let f = solve_vortex(&p, None)?.f;
    Ok(m_alpha_pair(geom, higgs, alpha, tau, &f, &zero))
}

const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 9.0),
    (0.0, 8.0 / 9.0),
    (0.774_596_669_241_483_4, 5.0 / 9.0),
];

/// K_α and K_α′ along the ray at the given increasing times, t ≥ 0.
///
/// K is constant along the ray (its slope is −∫φ̇₀(Ric ω₀ − ⟨S⟩ω₀) = 0) and the
/// constant shift b drops out, so K_α(t) = K_α(0) + ∫₀ᵗK_α′, integrated with a
/// 3-point Gauss rule on each interval. `threads` = 0 uses every core.
pub fn ray_k_alpha_profile(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    ray: &OnePSRay,
    ts: &[f64],
    threads: usize,
) -> Result<RayProfile> {
    ray.check(geom)?;
    if ts.is_empty() {
        return Ok(RayProfile::default());
    }
    if ts[0] < 0.0 || ts.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput(
            "profile times must be nonnegative and increasing".into(),
        ));
    }
    let mut knots = vec![0.0];
    knots.extend(ts.iter().cloned().filter(|t| *t > 0.0));
    let mut evals: Vec<f64> = ts.to_vec();
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        for (x, _) in GAUSS3 {
            evals.push(0.5 * (a + b) + 0.5 * (b - a) * x);
        }
    }
    let mut values = par_map(evals.len() + 1, threads, |i| {
        if i == evals.len() {
            k_alpha_at_origin(geom, higgs, alpha, tau)
        } else {
            ray_k_alpha_prime(geom, higgs, alpha, tau, evals[i])
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let k0 = values.pop().unwrap();
    let (prime, quad) = values.split_at(ts.len());
    let mut acc = k0;
    let mut cumulative = vec![k0];
    for (i, w) in knots.windows(2).enumerate() {
        let half = 0.5 * (w[1] - w[0]);
        acc += (0..3)
            .map(|q| GAUSS3[q].1 * half * quad[3 * i + q])
            .sum::<f64>();
        cumulative.push(acc);
    }
    let offset = usize::from(ts[0] > 0.0);
    let points = ts
        .iter()
        .enumerate()
        .map(|(i, &t)| RayPoint {
            t,
            k_alpha: cumulative[i + offset],
            k_alpha_prime: prime[i],
        })
        .collect();
    Ok(RayProfile { points })
}

/// Limit of a geometrically converging sequence from its last three equally
/// spaced samples (Aitken's Δ²); falls back to the last sample when the
/// differences do not contract.
pub fn aitken_limit(s: [f64; 3]) -> f64 {
    let d1 = s[1] - s[0];
    let d2 = s[2] - s[1];
    let denom = d2 - d1;
    if d2 == 0.0
        || denom == 0.0
        || !(d2 / d1).is_finite()
        || (d2 / d1).abs() >= 1.0
        || d2 / d1 < 0.0
    {
        return s[2];
    }
    s[2] - d2 * d2 / denom
}

/// Asymptotic slope of K_α along the ray, extrapolated from t = 4, 5, 6.
pub fn ray_slope_limit(
    geom: &BackgroundGeometry,
    higgs: &HiggsData,
    alpha: f64,
    tau: f64,
    threads: usize,
) -> Result<f64> {
    let ts = [4.0, 5.0, 6.0];
    let v = par_map(3, threads, |i| {
        ray_k_alpha_prime(geom, higgs, alpha, tau, ts[i])
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(aitken_limit([v[0], v[1], v[2]]))
}
