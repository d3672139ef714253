use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("solver did not converge after {iterations} iterations (last residual {residual:.3e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    #[error("degenerate profile: {0}")]
    DegenerateProfile(String),

    #[error("restricted operator is not positive: Rayleigh quotient {rayleigh:.6e}")]
    PositivityViolation { rayleigh: f64 },

    #[error("ambiguous projection: candidates (x0={x0_a:.6}, theta={theta_a:.6}) and (x0={x0_b:.6}, theta={theta_b:.6})")]
    AmbiguousProjection {
        x0_a: f64,
        theta_a: f64,
        x0_b: f64,
        theta_b: f64,
    },

    #[error("field is outside the tube around the soliton manifold (distance {distance:.4e} >= {delta:.4e})")]
    OutOfTube { distance: f64, delta: f64 },

    #[error("degenerate chart: {0}")]
    DegenerateChart(String),

    #[error("unreliable estimate: effective sample size {ess:.1} below {required:.1}")]
    Unreliable { ess: f64, required: f64 },

    #[error("schema violation: {0}")]
    Schema(String),

    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: String, expected: String },

    #[error("truncated or corrupted payload: {0}")]
    TruncatedPayload(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("linear algebra failure: {0}")]
    LinAlg(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
