use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The Gram matrix stayed indefinite after the full jitter escalation.
    #[error("gram matrix is not positive definite (final jitter tried: {jitter:e})")]
    Conditioning { jitter: f64 },

    #[error("insufficient data: need at least {needed}, got {found}")]
    InsufficientData { needed: usize, found: usize },

    /// The posterior variance of the estimate is zero, so the quantity is already exact.
    #[error("estimate variance is zero; information gain is undefined")]
    DegenerateEstimate,

    #[error("optimization failed: all {starts} starts produced non-finite values")]
    OptimizationFailed { starts: usize },

    #[error("black box returned non-finite value {value} at {x:?}")]
    Evaluation { x: Vec<f64>, value: f64 },

    #[error("size limit exceeded: {0}")]
    Size(String),
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}
