use thiserror::Error;

/// Errors produced by the optimizer library.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller passed arguments that violate a documented precondition.
    #[error("invalid arguments: {0}")]
    InvalidArguments(String),

    /// An internal invariant was violated; indicates a bug, not bad input.
    #[error("internal consistency violation: {0}")]
    InternalConsistency(String),

    /// A worker task failed; the whole run is aborted.
    #[error("worker for partition {part_id} failed: {message}")]
    WorkerFailure { part_id: u64, message: String },

    /// The instance exceeds the bounds of an exhaustive enumeration.
    #[error("instance too large for exhaustive enumeration: {0}")]
    TooLarge(String),

    /// A wire message could not be decoded or failed validation.
    #[error("malformed message: {0}")]
    MalformedMessage(String),

    /// Socket or file I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArguments(msg.into())
    }

    pub(crate) fn internal(msg: impl Into<String>) -> Self {
        Error::InternalConsistency(msg.into())
    }

    pub(crate) fn malformed(msg: impl Into<String>) -> Self {
        Error::MalformedMessage(msg.into())
    }
}
