use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite: pivot {pivot} = {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("zero diagonal entry in row {row}")]
    ZeroDiagonal { row: usize },

    #[error("invalid coefficient {value} at x = {location:?}")]
    InvalidCoefficient { location: Vec<f64>, value: f64 },

    #[error("non-finite value {value} at node {node}")]
    NonFinite { node: usize, value: f64 },

    #[error("point {0:?} lies outside the unit domain")]
    OutsideDomain(Vec<f64>),

    #[error("non-finite training loss at step {step}")]
    NonFiniteLoss { step: usize },

    #[error("gradient check failed: max relative error {0:e}")]
    GradientCheck(f64),

    #[error("container format: {0}")]
    Format(String),

    #[error("multigrid did not converge on record {record}: residual {residual:e}")]
    NotConverged { record: usize, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
