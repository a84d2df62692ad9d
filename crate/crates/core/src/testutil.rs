use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::surface::{BackgroundGeometry, ScalarField};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random band-limited field with modes up to `kmax`, amplitude O(`amp`).
pub fn smooth_field(
    geom: &BackgroundGeometry,
    rng: &mut ChaCha8Rng,
    kmax: usize,
    amp: f64,
) -> ScalarField {
    geom.band_limited_field(kmax, amp, &mut || rng.gen_range(-1.0..1.0))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}
