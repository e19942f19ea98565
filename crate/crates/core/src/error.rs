use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("mesh validation error: {0}")]
    Validation(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("sign condition violated: {what} at ({x}, {y})")]
    SignCondition { what: String, x: f64, y: f64 },

    #[error("solver error: {0}")]
    Solver(String),

    #[error("no convergence after {iterations} iterations (last energy decrease {last_gap:e})")]
    Convergence { iterations: usize, last_gap: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
