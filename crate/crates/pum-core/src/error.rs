use thiserror::Error;

/// Errors produced by the model, solvers, estimators and data layer.
#[derive(Debug, Error)]
pub enum PumError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("gradient diverges at boundary (p[{index}] = {value})")]
    BoundaryGradient { index: usize, value: f64 },

    #[error("bracket expansion failed after {doublings} doublings (lo = {lo}, hi = {hi})")]
    BracketExpansion { doublings: usize, lo: f64, hi: f64 },

    #[error("root finder exceeded {iterations} iterations (bracket [{lo}, {hi}], residual {residual:e})")]
    RootNotConverged { iterations: usize, lo: f64, hi: f64, residual: f64 },

    #[error("solver exceeded {iterations} iterations (residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("{0} is not supported for this perturbation family")]
    Unsupported(&'static str),

    #[error("Hessian not positive definite (condition number {condition:e})")]
    SingularHessian { condition: f64 },

    #[error("oracle restricted to desk scale: grid would need {points} points (limit {limit})")]
    OracleTooLarge { points: f64, limit: usize },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: cannot parse `{value}` in column `{column}`")]
    BadCell { row: usize, column: String, value: String },

    #[error("dataset error: {0}")]
    Data(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PumError>;
