use thiserror::Error;

/// Errors produced by the sensing library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid index {index}: {reason}")]
    InvalidIndex { index: usize, reason: String },

    /// The observed block of the covariance stays singular even after jitter.
    #[error("covariance of observed nodes is singular at node {index}")]
    Singular { index: usize },

    /// A node's conditional variance is too small to condition on.
    #[error("conditional variance {variance:e} of node {index} is degenerate")]
    DegenerateVariance { index: usize, variance: f64 },

    #[error("model is not a valid covariance: {0}")]
    InvalidModel(String),

    #[error("contract violation: {0}")]
    Contract(String),

    /// Nothing was delivered, so there is no prediction error to score.
    #[error("no measurement was delivered")]
    NoObservation,

    #[error("degenerate model: expected prediction error {0:e} is too small")]
    DegenerateModel(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
