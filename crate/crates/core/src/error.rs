use thiserror::Error;

/// Errors produced by the solver toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid sparse structure: {0}")]
    InvalidStructure(String),

    #[error("matrix is not square ({nrows}x{ncols})")]
    NotSquare { nrows: usize, ncols: usize },

    #[error("weight vector entry {index} is not positive ({value})")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("matrix has a negative entry at ({row}, {col}): {value}")]
    NegativeEntry { row: usize, col: usize, value: f64 },

    #[error("matrix is numerically singular (pivot {pivot} at step {step})")]
    Singular { step: usize, pivot: f64 },

    #[error("conjugate gradient breakdown at iteration {iteration} (curvature {curvature})")]
    CgBreakdown { iteration: usize, curvature: f64 },

    #[error("iterative solve did not converge within {max_iter} iterations (residual {residual:e})")]
    NotConverged { max_iter: usize, residual: f64 },

    #[error("invalid decomposition: {0}")]
    InvalidDecomposition(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("instance too large for dense analysis: n = {n} exceeds limit {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("simulator deadlock at tick {tick}: no runnable process")]
    Deadlock { tick: u64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
