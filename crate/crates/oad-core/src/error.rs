//! Crate-wide error type.

use alloc::string::String;
use core::fmt;

/// Errors raised by the core pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Input violated an operation precondition (empty clip, short frame, ...).
    InvalidInput(String),
    /// Tensor/embedding shape did not match what the operation expects.
    ShapeMismatch(String),
    /// A computation produced NaN or Inf.
    NonFinite(String),
    /// A degenerate numeric case that cannot be normalized away
    /// (e.g. antipodal points with a zero mean).
    Degenerate(String),
    /// Checkpoint blob could not be interpreted.
    BadCheckpoint(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
            Error::BadCheckpoint(msg) => write!(f, "bad checkpoint: {msg}"),
        }
    }
}

pub type Result<T> = core::result::Result<T, Error>;
