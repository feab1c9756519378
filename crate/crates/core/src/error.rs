use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// Variants map onto the CLI exit codes: `Domain`, `Truncation`, `Coverage`,
/// `Degenerate` and `Shape` are parameter problems (exit 2), `Config` and
/// `Precondition` are usage problems (exit 1), `Invariant` is an audit
/// failure (exit 3).
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("truncation error: {0}")]
    Truncation(String),
    #[error("grid coverage error: {0}")]
    Coverage(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("resource limit: {0}")]
    Resource(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
