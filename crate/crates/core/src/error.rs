use thiserror::Error;

/// Errors raised by operator construction and application.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A b×b block of a factor could not be inverted.
    #[error("singular factor: factor {factor}, block {block}")]
    SingularFactor { factor: usize, block: usize },

    /// A coefficient breaks the zero/nonzero pattern required for causality.
    #[error("mask violation in {matrix} at ({row}, {col}): {reason}")]
    MaskViolation {
        matrix: &'static str,
        row: usize,
        col: usize,
        reason: &'static str,
    },

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
