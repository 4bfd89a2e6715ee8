use thiserror::Error;

use crate::lp::LpStatus;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty measure")]
    EmptyMeasure,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("point {point:?} lies outside the grid box")]
    OutsideGrid { point: Vec<f64> },

    #[error("cost {0} has no Lipschitz constant")]
    MissingLipschitz(usize),

    #[error("cost kind does not support {0}")]
    UnsupportedCost(&'static str),

    #[error("enumeration bound exceeded: {size} tuples > {limit}")]
    EnumerationBound { size: u128, limit: u128 },

    #[error("linear program ended with status {status:?} after {iterations} iterations")]
    Solver { status: LpStatus, iterations: usize },

    #[error("did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("matrix is not symmetric positive definite")]
    NotSpd,

    #[error("malformed input at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
