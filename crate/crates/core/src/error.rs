use thiserror::Error;

/// Every failure mode surfaced by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("representation error: {0}")]
    Representation(String),

    #[error("singular point: {0}")]
    Singular(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("accuracy target missed: {message} (partial value {partial:e}, error estimate {estimate:e})")]
    Accuracy {
        message: String,
        partial: f64,
        estimate: f64,
    },

    #[error("ambiguous asymptotic classification of pair ({i},{j}): scale ratio {ratio:e} inside the threshold band")]
    Ambiguous { i: usize, j: usize, ratio: f64 },

    #[error("empty region: {0}")]
    EmptyRegion(String),

    #[error("integration failure: {message} (stopped at r = {radius:e})")]
    Integration { message: String, radius: f64 },

    #[error("no convergence after {iterations} iterations (mismatch {mismatch:e})")]
    NoConvergence { iterations: usize, mismatch: f64 },

    #[error("singular Jacobian (condition estimate {condition:e})")]
    SingularJacobian { condition: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
