use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing required field `{0}`")]
    MissingField(String),
    #[error("feature vector for action {action}, context {context} has norm {norm:.6} > 1")]
    NormViolation { action: usize, context: usize, norm: f64 },
    #[error("{what} = {value} outside [0, 1] at action {action}, context {context}")]
    RangeViolation {
        what: &'static str,
        action: usize,
        context: usize,
        value: f64,
    },
    #[error("no-op action has nonzero {what} at context {context}")]
    NullActionNonzero { what: &'static str, context: usize },
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("context distribution is required but absent")]
    MissingDistribution,
    #[error("conversion probability is undefined for the no-op action")]
    NullActionConversion,
    #[error("horizon of {0} rounds exceeded")]
    HorizonExceeded(usize),
    #[error("maximum-likelihood fit did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },
    #[error("numerical instability in simplex: {0}")]
    NumericalInstability(String),
    #[error("instance has {0} free variables, oracle supports at most 4")]
    TooLarge(usize),
    #[error("coefficient table does not match the context grid: {0}")]
    CoefficientMismatch(String),
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("no rows left after filtering ({rejected} rejected)")]
    EmptyAfterFiltering { rejected: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
