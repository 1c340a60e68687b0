use thiserror::Error;

use crate::triplets::ConflictReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degenerate kernel: trace {0:e} is not positive")]
    DegenerateKernel(f64),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("conflicting triplets: {0}")]
    Conflict(ConflictReport),

    #[error(
        "objective diverged at iteration {iteration} (value {value}); try a smaller step size"
    )]
    Divergence { iteration: usize, value: f64 },

    #[error("triplet generation exhausted: {0}")]
    Exhausted(String),
}
