use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (non-finite
    /// value, point outside `[a, b]`, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// The caller violated a precondition (too few nodes, mismatched
    /// lengths, negative stiffness, ...).
    #[error("usage error: {0}")]
    Usage(String),

    /// Banded Cholesky met a non-positive pivot.
    #[error("matrix is not positive definite: pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    /// An iterate stopped being finite.
    #[error("non-finite iterate at iteration {iteration}")]
    NonFinite { iteration: usize },

    /// Malformed configuration text.
    #[error("line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    /// Well-formed configuration that violates an invariant.
    #[error("invalid value for `{key}`: {message}")]
    ConfigInvalid { key: String, message: String },

    /// Malformed arithmetic expression.
    #[error("expression error at offset {offset}: {message}")]
    Expression { offset: usize, message: String },

    /// Reading or writing an artifact failed.
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
