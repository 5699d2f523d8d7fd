use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not Hermitian: deviation {deviation:e} exceeds tolerance {tolerance:e}")]
    NotHermitian { deviation: f64, tolerance: f64 },

    #[error("matrix is not positive semidefinite: smallest eigenvalue {min_eigenvalue:e}")]
    NotPsd { min_eigenvalue: f64 },

    #[error("matrix is singular or indefinite: smallest eigenvalue {min_eigenvalue:e}")]
    Singular { min_eigenvalue: f64 },

    #[error("eigendecomposition did not converge")]
    EigFailed,

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid JSON: {0}")]
    InvalidJson(String),

    #[error("{failed} of {total} realizations failed (limit {limit}); first failure: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        limit: usize,
        first: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
