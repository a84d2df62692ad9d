//! Reference Higgs data: log|φ|²_{h₀} for an effective divisor, with h₀ the
//! constant-curvature metric normalized so that sup |φ|²_{h₀} = 1.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::surface::sphere::{chart_to_vector, vector_to_chart};
use crate::surface::{BackgroundGeometry, GreenFunction, ScalarField, SurfacePoint};

/// Stand-in for log 0 at divisor nodes; e^{-745} underflows to zero.
pub const LOG_FLOOR: f64 = -745.0;

/// Largest flow time accepted by [`pullback_higgs`].
pub const MAX_FLOW_TIME: f64 = 30.0;

/// Points closer than this are treated as coincident.
const COINCIDENT: f64 = 1e-12;

/// Effective divisor Σ n_j p_j.
#[derive(Clone, Debug, PartialEq)]
pub struct Divisor {
    points: Vec<SurfacePoint>,
    multiplicities: Vec<u32>,
}

impl Divisor {
    pub fn new(points: Vec<SurfacePoint>, multiplicities: Vec<u32>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput(
                "divisor must have degree at least 1".into(),
            ));
        }
        if points.len() != multiplicities.len() {
            return Err(Error::InvalidInput(
                "points and multiplicities differ in length".into(),
            ));
        }
        if multiplicities.contains(&0) {
            return Err(Error::InvalidInput(
                "multiplicities must be positive".into(),
            ));
        }
        Ok(Self {
            points,
            multiplicities,
        })
    }

    /// Divisor on the sphere from chart coordinates; `None` is the point at infinity.
    pub fn on_sphere(entries: &[(Option<Complex64>, u32)]) -> Result<Self> {
        let points = entries
            .iter()
            .map(|(z, _)| {
                z.map(SurfacePoint::chart)
                    .unwrap_or_else(SurfacePoint::infinity)
            })
            .collect();
        Self::new(points, entries.iter().map(|e| e.1).collect())
    }

    pub fn on_plane(entries: &[([f64; 2], u32)]) -> Result<Self> {
        Self::new(
            entries.iter().map(|e| SurfacePoint::Plane(e.0)).collect(),
            entries.iter().map(|e| e.1).collect(),
        )
    }

    /// Parse one `x y multiplicity` line per point (`inf multiplicity` for
    /// the point at infinity on the sphere). Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, genus: u32) -> Result<Self> {
        let mut points = Vec::new();
        let mut mults = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let bad =
                |what: &str| Error::Parse(format!("divisor line {}: {what}: `{line}`", k + 1));
            let mult_tok = match toks.as_slice() {
                ["inf", m] => {
                    if genus != 0 {
                        return Err(bad("`inf` is only valid on the sphere"));
                    }
                    points.push(SurfacePoint::infinity());
                    m
                }
                [x, y, m] => {
                    let x: f64 = x.parse().map_err(|_| bad("bad x"))?;
                    let y: f64 = y.parse().map_err(|_| bad("bad y"))?;
                    if !x.is_finite() || !y.is_finite() {
                        return Err(bad("non-finite coordinate"));
                    }
                    points.push(match genus {
                        0 => SurfacePoint::chart(Complex64::new(x, y)),
                        _ => SurfacePoint::Plane([x, y]),
                    });
                    m
                }
                _ => return Err(bad("expected `x y multiplicity`")),
            };
            mults.push(
                mult_tok
                    .parse::<u32>()
                    .map_err(|_| bad("bad multiplicity"))?,
            );
        }
        Self::new(points, mults)
    }

    pub fn points(&self) -> &[SurfacePoint] {
        &self.points
    }

    pub fn multiplicities(&self) -> &[u32] {
        &self.multiplicities
    }

    pub fn degree(&self) -> u32 {
        self.multiplicities.iter().sum()
    }

    pub fn max_multiplicity(&self) -> u32 {
        self.multiplicities.iter().copied().max().unwrap_or(0)
    }

    /// Multiplicity at a point (0 if absent).
    pub fn multiplicity_at(&self, geom: &BackgroundGeometry, p: &SurfacePoint) -> u32 {
        self.points
            .iter()
            .zip(&self.multiplicities)
            .filter(|(q, _)| geom.distance(p, q) < COINCIDENT)
            .map(|(_, n)| *n)
            .sum()
    }

    pub fn check(&self, geom: &BackgroundGeometry) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if !geom.accepts(p) {
                return Err(Error::InvalidInput(format!(
                    "divisor point {p:?} does not lie on this surface"
                )));
            }
            for q in &self.points[..i] {
                if geom.distance(p, q) < COINCIDENT * geom.volume.sqrt() {
                    return Err(Error::InvalidInput(format!(
                        "coincident divisor points {p:?} and {q:?}; merge them"
                    )));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Divisor {
    /// The text format accepted by [`Divisor::parse`].
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, n) in self.points.iter().zip(&self.multiplicities) {
            match p {
                SurfacePoint::Plane(x) => writeln!(f, "{:.17e} {:.17e} {n}", x[0], x[1])?,
                SurfacePoint::Sphere(v) => match vector_to_chart(*v) {
                    Some(z) => writeln!(f, "{:.17e} {:.17e} {n}", z.re, z.im)?,
                    None => writeln!(f, "inf {n}")?,
                },
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum Kernel {
    Green(Vec<GreenFunction>),
    Chordal,
}

/// log|φ|²_{h₀} on the grid together with the data needed to evaluate it
/// elsewhere.
#[derive(Clone, Debug)]
pub struct HiggsData {
    pub divisor: Divisor,
    /// log|φ|²_{h₀}, floored at [`LOG_FLOOR`], with grid maximum 0.
    pub u0: ScalarField,
    /// |φ|²_{h₀} = e^{u0}.
    pub p0: ScalarField,
    /// Density of iF_{h₀} against ω₀: 2πN/V.
    pub curvature_density: f64,
    /// Additive constant applied to the raw kernel sum.
    pub normalization: f64,
    kernel: Kernel,
}

impl HiggsData {
    pub fn degree(&self) -> u32 {
        self.divisor.degree()
    }

    fn raw(&self, geom: &BackgroundGeometry, x: &SurfacePoint) -> f64 {
        match &self.kernel {
            Kernel::Green(gs) => gs
                .iter()
                .zip(self.divisor.multiplicities())
                .map(|(g, &n)| -4.0 * PI * n as f64 * g.evaluate(geom, x))
                .sum(),
            Kernel::Chordal => chordal_sum(&self.divisor, x),
        }
    }

    /// log|φ|²_{h₀} at an arbitrary point (same normalization as `u0`).
    pub fn evaluate_u0(&self, geom: &BackgroundGeometry, x: &SurfacePoint) -> f64 {
        (self.raw(geom, x) + self.normalization).max(LOG_FLOOR)
    }

    /// ∫ u0 h ω₀ with the logarithmic singularities integrated in polar
    /// coordinates around each divisor point.
    pub fn integrate_u0(&self, geom: &BackgroundGeometry, h: &[f64]) -> f64 {
        let gs = match &self.kernel {
            Kernel::Green(gs) => gs.clone(),
            Kernel::Chordal => self
                .divisor
                .points()
                .iter()
                .map(|p| GreenFunction::new(geom, *p))
                .collect(),
        };
        let singular: f64 = gs
            .iter()
            .zip(self.divisor.multiplicities())
            .map(|(g, &n)| -4.0 * PI * n as f64 * g.integrate_against(geom, h))
            .sum();
        // constant relating u0 to −4πΣnG, read off away from the divisor
        let offset = match &self.kernel {
            Kernel::Green(_) => self.normalization,
            Kernel::Chordal => {
                let mut best = (f64::NEG_INFINITY, 0.0);
                for i in 0..geom.len() {
                    if self.u0[i] > best.0 {
                        let green: f64 = gs
                            .iter()
                            .zip(self.divisor.multiplicities())
                            .map(|(g, &n)| -4.0 * PI * n as f64 * g.values()[i])
                            .sum();
                        best = (self.u0[i], self.u0[i] - green);
                    }
                }
                best.1
            }
        };
        singular + offset * geom.integrate(h)
    }
}

/// e^u, exactly zero at the floor.
pub fn density(u: f64) -> f64 {
    if u <= LOG_FLOOR {
        0.0
    } else {
        u.exp()
    }
}

fn chordal_sum(d: &Divisor, x: &SurfacePoint) -> f64 {
    let v = match x {
        SurfacePoint::Sphere(v) => *v,
        _ => return f64::NAN,
    };
    d.points()
        .iter()
        .zip(d.multiplicities())
        .map(|(p, &n)| {
            let q = match p {
                SurfacePoint::Sphere(q) => q,
                _ => return f64::NAN,
            };
            // |w₁z₀ − w₀z₁|² for unit homogeneous coordinates = |x − p|²/4
            let c2 = (v[0] - q[0]).powi(2) + (v[1] - q[1]).powi(2) + (v[2] - q[2]).powi(2);
            n as f64 * (0.25 * c2).ln()
        })
        .sum()
}

fn finish(
    geom: &BackgroundGeometry,
    divisor: Divisor,
    raw: ScalarField,
    kernel: Kernel,
) -> HiggsData {
    let on_divisor = |i: usize| {
        divisor
            .points()
            .iter()
            .any(|p| geom.distance(p, &geom.node_point(i)) < COINCIDENT)
    };
    let sup = (0..raw.len())
        .filter(|&i| !on_divisor(i))
        .map(|i| raw[i])
        .fold(f64::NEG_INFINITY, f64::max);
    let normalization = -sup;
    let mut u0: ScalarField = raw
        .iter()
        .map(|r| (r + normalization).max(LOG_FLOOR))
        .collect();
    for (i, u) in u0.iter_mut().enumerate() {
        if on_divisor(i) {
            *u = LOG_FLOOR;
        }
    }
    let p0 = u0.iter().map(|&u| density(u)).collect();
    let curvature_density = 2.0 * PI * divisor.degree() as f64 / geom.volume;
    HiggsData {
        divisor,
        u0,
        p0,
        curvature_density,
        normalization,
        kernel,
    }
}

/// u0 = −4π Σ n_j G(p_j,·) + C with sup u0 = 0.
pub fn build_higgs_green(geom: &BackgroundGeometry, divisor: &Divisor) -> Result<HiggsData> {
    divisor.check(geom)?;
    let gs: Vec<GreenFunction> = divisor
        .points()
        .iter()
        .map(|p| GreenFunction::new(geom, *p))
        .collect();
    let mut raw = vec![0.0; geom.len()];
    for (g, &n) in gs.iter().zip(divisor.multiplicities()) {
        for (r, v) in raw.iter_mut().zip(g.values()) {
            *r -= 4.0 * PI * n as f64 * v;
        }
    }
    Ok(finish(geom, divisor.clone(), raw, Kernel::Green(gs)))
}

/// Sphere only: u0 = Σ n_j log|w₁z₀ − w₀z₁|² in unit homogeneous coordinates,
/// i.e. Σ 2n_j log|z − p_j| − N log(1+|z|²) + const in the chart.
pub fn build_higgs_explicit_sphere(
    geom: &BackgroundGeometry,
    divisor: &Divisor,
) -> Result<HiggsData> {
    if geom.sphere().is_none() {
        return Err(Error::InvalidGeometry(
            "explicit Higgs formula needs the sphere".into(),
        ));
    }
    divisor.check(geom)?;
    let raw: ScalarField = (0..geom.len())
        .map(|i| chordal_sum(divisor, &geom.node_point(i)))
        .collect();
    Ok(finish(geom, divisor.clone(), raw, Kernel::Chordal))
}

/// Image of the divisor under z ↦ e^{2t}z (0 and ∞ are fixed).
pub fn flow_divisor(divisor: &Divisor, t: f64) -> Result<Divisor> {
    if !(t.abs() <= MAX_FLOW_TIME) {
        return Err(Error::InvalidInput(format!(
            "flow time {t} exceeds ±{MAX_FLOW_TIME}"
        )));
    }
    let s = (2.0 * t).exp();
    let points = divisor
        .points()
        .iter()
        .map(|p| match p {
            SurfacePoint::Sphere(v) => match vector_to_chart(*v) {
                Some(z) => Ok(SurfacePoint::Sphere(chart_to_vector(z * s))),
                None => Ok(*p),
            },
            SurfacePoint::Plane(_) => Err(Error::InvalidGeometry(
                "divisor flow is defined on the sphere".into(),
            )),
        })
        .collect::<Result<Vec<_>>>()?;
    Divisor::new(points, divisor.multiplicities().to_vec())
}

/// Higgs data of the flowed divisor, rebuilt by the same construction.
pub fn pullback_higgs(geom: &BackgroundGeometry, higgs: &HiggsData, t: f64) -> Result<HiggsData> {
    if geom.sphere().is_none() {
        return Err(Error::InvalidGeometry(
            "pullback along the C* action needs the sphere".into(),
        ));
    }
    if t == 0.0 {
        return Ok(higgs.clone());
    }
    let flowed = flow_divisor(&higgs.divisor, t)?;
    match higgs.kernel {
        Kernel::Green(_) => build_higgs_green(geom, &flowed),
        Kernel::Chordal => build_higgs_explicit_sphere(geom, &flowed),
    }
}

#[cfg(test)]
mod tests;
