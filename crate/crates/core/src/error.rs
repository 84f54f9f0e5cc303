use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),

    #[error("smoothing parameter must be positive, got {0}")]
    InvalidSmoothing(f64),

    #[error("degenerate pair: second matrix is numerically zero")]
    DegeneratePair,

    #[error("design variable {index} is outside the domain (value {value})")]
    OutOfDomain { index: usize, value: f64 },

    #[error("ground structure has no free degrees of freedom")]
    NoFreeDofs,

    #[error("invalid ground structure: {0}")]
    InvalidStructure(String),

    #[error("load node {0} is not free")]
    InvalidLoadNode(usize),

    #[error("feasible set is empty: {0}")]
    EmptyFeasibleSet(String),

    #[error("bisection window does not bracket the optimum: {0}")]
    BracketError(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
