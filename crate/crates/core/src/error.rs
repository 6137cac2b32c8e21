use thiserror::Error;

pub type Result<T> = std::result::Result<T, QrcError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QrcError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("size limit exceeded: {what} supports at most {max}, got {got}")]
    SizeLimit {
        what: &'static str,
        max: usize,
        got: usize,
    },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("task generation failed: {0}")]
    TaskGeneration(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("verification failed: max deviation {max_deviation:e} exceeds {tolerance:e}")]
    Verification { max_deviation: f64, tolerance: f64 },
}

impl QrcError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        QrcError::InvalidArgument(msg.into())
    }
}
