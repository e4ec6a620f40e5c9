use thiserror::Error;

/// Errors produced by the tuner library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index {index} out of range for space of size {size}")]
    OutOfRange { index: usize, size: usize },

    #[error("invalid knob definition: {0}")]
    InvalidKnob(String),

    #[error("invalid workload `{name}`: {reason}")]
    InvalidWorkload { name: String, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("no valid configuration exists for workload `{0}`")]
    NoValidConfiguration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
