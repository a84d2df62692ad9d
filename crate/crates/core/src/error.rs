use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("right-hand side is not mean-zero (integral {integral:.3e}, scale {scale:.3e})")]
    NotMeanZero { integral: f64, scale: f64 },

    #[error("NonPositiveConformalFactor: min(1 - laplacian(kpot)) = {min:.3e}")]
    NonPositiveConformalFactor { min: f64 },

    #[error("BradlowViolated: tau*V = {tau_volume:.6} <= 4*pi*N = {bound:.6}")]
    BradlowViolated { tau_volume: f64, bound: f64 },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:.3e})")]
    SolverFailed {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("ContinuityStalled at alpha = {alpha:.6} (target {target:.6})")]
    ContinuityStalled { alpha: f64, target: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
