use thiserror::Error;

/// Errors raised by the grid, operator and diagnostic layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("argument out of range: {0}")]
    Range(String),
    #[error("form degree mismatch: expected {expected}, got {got}")]
    DegreeMismatch { expected: usize, got: usize },
    #[error("solver failed after {iterations} iterations: {message} (best residual {best_residual:.3e})")]
    Solver {
        message: String,
        iterations: usize,
        best_residual: f64,
    },
    #[error("boundary sampling failed: {0}")]
    Sampling(String),
    #[error("dense oracle refused: dimension {dim} exceeds limit {limit}")]
    DenseTooLarge { dim: usize, limit: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn config<S: Into<String>>(msg: S) -> LabError {
    LabError::Config(msg.into())
}
