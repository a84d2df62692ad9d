//! Run configuration: `[section]` headers with `key = value` pairs.
//! Every key has an explicit default that shows up in the resolved echo.

use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use vortexlab::higgs::{build_higgs_explicit_sphere, build_higgs_green, Divisor, HiggsData};
use vortexlab::surface::BackgroundGeometry;

pub const SCHEMA: &str = include_str!("schema.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    SolveVortex,
    SolveGravitating,
    SolveTwisted,
    RaySlope,
    ConvexityScan,
    EpsilonGeodesic,
    Stability,
    EnergyReport,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::SolveVortex => "solve-vortex",
            Experiment::SolveGravitating => "solve-gravitating",
            Experiment::SolveTwisted => "solve-twisted",
            Experiment::RaySlope => "ray-slope",
            Experiment::ConvexityScan => "convexity-scan",
            Experiment::EpsilonGeodesic => "epsilon-geodesic",
            Experiment::Stability => "stability",
            Experiment::EnergyReport => "energy-report",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub experiment: Experiment,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_output() -> PathBuf {
    PathBuf::from("vortexlab-out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceSection {
    /// 0 (round sphere) or 1 (flat torus).
    pub genus: u32,
    pub volume: f64,
    /// Grid side n on the torus, band limit L on the sphere.
    pub resolution: usize,
    /// Torus modulus (re, im); must be absent on the sphere.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<[f64; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DivisorSection {
    /// One entry per point: `x y multiplicity`, or `inf multiplicity` on the sphere.
    #[serde(default)]
    pub points: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsSection {
    pub tau: f64,
    pub alpha: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub alpha_step: f64,
    pub min_alpha_step: f64,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self {
            tau: 1.0,
            alpha: 0.0,
            lambda: 0.0,
            epsilon: 0.05,
            alpha_step: 0.05,
            min_alpha_step: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptionsSection {
    /// Sup-norm of the random background potential (0 = round/flat metric).
    pub kpot_amplitude: f64,
    /// Highest mode of random fields.
    pub modes: usize,
    /// convexity-scan: number of random segments and samples per segment.
    pub segments: usize,
    pub samples: usize,
    /// convexity-scan: sup-norm of the random segment direction.
    pub amplitude: f64,
    /// ray-slope: K_α profile on [0, profile_t_max] with profile_steps intervals.
    pub profile_t_max: f64,
    pub profile_steps: usize,
    /// epsilon-geodesic: the far endpoint is the ray potential at this time.
    pub endpoint_t: f64,
    pub nodes: usize,
    /// solve-twisted: ξ = 1 + bump with sup-norm xi_amplitude.
    pub xi_amplitude: f64,
}

impl Default for OptionsSection {
    fn default() -> Self {
        Self {
            kpot_amplitude: 0.0,
            modes: 3,
            segments: 50,
            samples: 11,
            amplitude: 1.0,
            profile_t_max: 6.0,
            profile_steps: 12,
            endpoint_t: 0.5,
            nodes: 17,
            xi_amplitude: 0.3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub surface: SurfaceSection,
    #[serde(default)]
    pub divisor: DivisorSection,
    #[serde(default)]
    pub physics: PhysicsSection,
    #[serde(default)]
    pub options: OptionsSection,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    fn resolve(&mut self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError(m));
        let s = &mut self.surface;
        match s.genus {
            0 => {
                if s.modulus.is_some() {
                    return bad("surface.modulus is only valid for genus 1".into());
                }
            }
            1 => {
                s.modulus.get_or_insert([0.0, 1.0]);
            }
            g => return bad(format!("surface.genus = {g}: only 0 and 1 are supported")),
        }
        if !(s.volume > 0.0) || !s.volume.is_finite() {
            return bad(format!("surface.volume = {} must be positive", s.volume));
        }
        if s.resolution < 4 {
            return bad(format!(
                "surface.resolution = {} is too small",
                s.resolution
            ));
        }
        let p = &self.physics;
        if !(p.tau > 0.0) {
            return bad(format!("physics.tau = {} must be positive", p.tau));
        }
        if !(p.alpha >= 0.0) {
            return bad(format!("physics.alpha = {} must be nonnegative", p.alpha));
        }
        if !(p.epsilon > 0.0) {
            return bad(format!("physics.epsilon = {} must be positive", p.epsilon));
        }
        if !(p.alpha_step > 0.0 && p.min_alpha_step > 0.0 && p.min_alpha_step <= p.alpha_step) {
            return bad(
                "physics.alpha_step and physics.min_alpha_step must satisfy 0 < min <= step".into(),
            );
        }
        let o = &self.options;
        if o.samples < 3 || o.nodes < 3 || o.profile_steps < 2 {
            return bad(
                "options.samples, options.nodes need >= 3 and options.profile_steps >= 2".into(),
            );
        }
        if self.divisor.points.is_empty() {
            return bad("divisor.points must list at least one point".into());
        }
        self.divisor()?;
        Ok(())
    }

    /// The resolved configuration with every default spelled out.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn divisor(&self) -> Result<Divisor, ConfigError> {
        Divisor::parse(&self.divisor.points.join("\n"), self.surface.genus)
            .map_err(|e| ConfigError(e.to_string()))
    }

    pub fn geometry(&self) -> vortexlab::Result<BackgroundGeometry> {
        let s = &self.surface;
        match s.modulus {
            Some([re, im]) => {
                BackgroundGeometry::build_torus(Complex64::new(re, im), s.volume, s.resolution)
            }
            None => BackgroundGeometry::build_sphere(s.volume, s.resolution),
        }
    }

    pub fn higgs(&self, geom: &BackgroundGeometry) -> vortexlab::Result<HiggsData> {
        let d = self
            .divisor()
            .map_err(|e| vortexlab::Error::InvalidInput(e.0))?;
        match self.surface.genus {
            0 => build_higgs_explicit_sphere(geom, &d),
            _ => build_higgs_green(geom, &d),
        }
    }
}
