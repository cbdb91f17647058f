use thiserror::Error;

/// Errors raised by the lab. Statistical misses are not errors; they are
/// reported through [`crate::harness::EstimatorResult`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("series tail bound {bound:.3e} exceeds tolerance {tol:.3e} (K = {modes}, t = {t})")]
    TailBound {
        bound: f64,
        tol: f64,
        modes: usize,
        t: f64,
    },

    #[error("LCP solver did not converge at step {step} after {iterations} iterations (residual {residual:.3e})")]
    LcpNonConvergence {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("quadrature failed to reach tolerance {tol:.3e} (estimate {estimate:.3e})")]
    Quadrature { tol: f64, estimate: f64 },

    #[error("trajectory is missing {0}")]
    MissingData(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Config(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::InvalidArgument(msg.into()))
}
