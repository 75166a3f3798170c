//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by fallible library operations.
///
/// Contract violations that indicate a programming bug (mixing coefficient
/// vectors from different bases, mismatched ranks in arithmetic) panic
/// instead, mirroring how shape errors are treated by `ndarray`.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// The requested operation is not defined for this basis kind.
    #[error("unsupported basis: {0}")]
    UnsupportedBasis(String),
    /// An iteration left the stable regime and was aborted.
    #[error("diverged: {0}")]
    Diverged(String),
    /// Configuration rejected during validation.
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
