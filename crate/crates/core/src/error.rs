use thiserror::Error;

/// Errors raised by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular weight at y = {y}, mu = {mu}: 1/mu - T(y) is numerically zero")]
    Singularity { y: f64, mu: f64 },

    #[error("singular weights at {} measurement indices (first: {:?})", .indices.len(), .indices.first())]
    SingularWeights { indices: Vec<usize> },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("quadrature accuracy check failed: quadrature {quadrature}, monte carlo {monte_carlo}, allowed gap {allowed}")]
    Accuracy { quadrature: f64, monte_carlo: f64, allowed: f64 },

    #[error("degenerate prediction: {0}")]
    DegeneratePrediction(String),

    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("{what} size {size} exceeds cap {cap}")]
    CapExceeded { what: &'static str, size: usize, cap: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by malformed input rather than numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidParameter(_) | Error::CapExceeded { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
