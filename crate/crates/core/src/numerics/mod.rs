//! Dense matrices, seeded random streams and the ridge pseudoinverse.

mod exec;
mod linalg;
mod matrix;
mod rng;

pub use exec::Exec;
pub use linalg::{cholesky_solve, pseudoinverse, pseudoinverse_with, ridge_solve, GramForm};
pub use matrix::RealMatrix;
pub use rng::{random_matrix, MatrixDistribution, RngStream, RNG_ALGORITHM};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix dimensions must be positive, got {rows}x{cols}")]
    ZeroDimension { rows: usize, cols: usize },
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("expected {expected} entries, got {actual}")]
    EntryCount { expected: usize, actual: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("regularization must be positive and finite, got {0}")]
    InvalidLambda(f64),
    #[error("solver failed: {0}")]
    Solver(String),
}

pub type Result<T, E = NumericsError> = std::result::Result<T, E>;
