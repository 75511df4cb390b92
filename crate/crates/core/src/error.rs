use thiserror::Error;

/// Errors raised by the design pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("eigen-solver did not converge within {iterations} iterations")]
    ConvergenceFailure { iterations: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("model order {order} exceeds the number of samples {samples}")]
    OrderTooLarge { order: usize, samples: usize },

    #[error("too few residual degrees of freedom: {dof}")]
    InsufficientDof { dof: usize },

    #[error("regressor matrix is singular")]
    SingularRegressor,

    #[error("invalid simplex weights: {0}")]
    InvalidWeights(String),

    #[error("hyperparameter search failed: every probe was rejected")]
    SearchFailure,

    #[error("grid oracle supports at most {max} vertices, problem has {got}")]
    TooManyVertices { max: usize, got: usize },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("noise-free output is identically zero")]
    ZeroInput,

    #[error("true impulse response is constant")]
    DegenerateTruth,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o failure: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
