use thiserror::Error;

/// Errors raised by estimation, inference, and I/O routines.
#[derive(Debug, Error)]
pub enum FglError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemiDefinite { min_eigenvalue: f64 },

    #[error("insufficient data: need at least 2 observations, got {n}")]
    InsufficientData { n: usize },

    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),

    #[error("unsupported design: {0}")]
    UnsupportedDesign(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: u64,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FglError>;
