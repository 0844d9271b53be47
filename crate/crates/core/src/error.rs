//! Crate-wide error type.
//!
//! Variants map one-to-one onto the CLI exit-code classes: schema/config
//! problems, data validation failures, statistical degeneracy, and internal
//! assertion failures.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Configuration or schema problem (unknown column, bad role mapping,
    /// invalid hyperparameter).
    #[error("schema error: {0}")]
    Schema(String),

    /// Data failed validation (non-binary outcome, unknown attribute level,
    /// empty group, malformed file).
    #[error("validation error: {0}")]
    Validation(String),

    /// A statistic is undefined on the given data (zero variance, empty
    /// conditioning group, zero denominator).
    #[error("degenerate statistic: {0}")]
    Degenerate(String),

    /// Internal invariant violated; indicates a bug, not a data problem.
    #[error("internal assertion failed: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn degenerate(msg: impl Into<String>) -> Self {
        Error::Degenerate(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }
}
