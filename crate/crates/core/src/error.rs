//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Matrix or vector shapes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Input data is unusable (missing columns, empty splits, points outside bounds, ...).
    #[error("data error: {0}")]
    Data(String),

    /// Cholesky failed even at the maximum jitter.
    #[error("matrix not positive definite: smallest eigenvalue {min_eigenvalue:.6e} after jitter {max_jitter:.1e}")]
    NotPositiveDefinite { min_eigenvalue: f64, max_jitter: f64 },

    /// A numerical routine failed to produce a usable result.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The operation is defined but not supported for the given configuration.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
