//! Error type shared by every module in the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// A file did not match its documented binary or text layout.
    #[error("format error: {0}")]
    Format(String),

    /// Input violated a documented precondition or invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Two operands disagreed on embedding or matrix dimension.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// An iterative solver hit its iteration cap before reaching tolerance.
    #[error("solver did not converge: {context} (residual {residual:e} after {iterations} iterations)")]
    NoConvergence {
        context: String,
        residual: f64,
        iterations: usize,
    },

    /// A computed quantity violated an internal consistency bound.
    #[error("internal consistency error: {0}")]
    Inconsistent(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
