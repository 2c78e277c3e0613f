use thiserror::Error;

use crate::stages::SolveTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected length {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {left_p}x{left_q} blocks vs {right_p}x{right_q} blocks")]
    ShapeMismatch {
        left_p: usize,
        left_q: usize,
        right_p: usize,
        right_q: usize,
    },

    #[error("matrix is numerically singular at pivot row {row}")]
    Singular { row: usize },

    #[error("dense expansion refused for m = {m} (limit {limit})")]
    TooLargeForDense { m: usize, limit: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("no convergence at step {step} after {iterations} iterations (last update {last_update:e})")]
    NotConverged {
        step: usize,
        iterations: usize,
        last_update: f64,
        trace: Box<SolveTrace>,
    },
}

impl Error {
    /// Process exit status for the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NotConverged { .. } => 3,
            Error::Validation(_) => 4,
            _ => 2,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
