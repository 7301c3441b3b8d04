//! Crate-wide error type and result alias.

use thiserror::Error;

/// Convenience alias used by every fallible operation in the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A text input could not be parsed; carries the 1-based line number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Input data violated a documented precondition.
    #[error("validation error: {0}")]
    Validation(String),

    /// Tensor or layer extents do not agree.
    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    /// A configuration value is out of its documented range.
    #[error("invalid config: {0}")]
    Config(String),

    /// A checkpoint file is corrupt, truncated, or has the wrong magic.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    /// The requested operation needs a classifier head the model lacks.
    #[error("model has no classifier head")]
    NoClassifierHead,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
