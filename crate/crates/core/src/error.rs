use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("non-finite weight function value {value} at omega = {omega}")]
    Evaluation { omega: f64, value: f64 },

    #[error("empty measure: total weight is zero")]
    EmptyMeasure,

    #[error("recurrence breakdown at index {index}: beta = {beta:e}")]
    Breakdown { index: usize, beta: f64 },

    #[error("quadrature did not converge: estimate {estimate:e} with error {error:e}")]
    Accuracy { estimate: f64, error: f64 },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("statistics mismatch: {0}")]
    StatisticsMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("numerical failure at {location}: {message}")]
    Numerical { location: String, message: String },

    #[error("Hilbert space dimension {dim} exceeds cap {cap}")]
    Size { dim: usize, cap: usize },

    #[error("integrator accuracy: trace drift {drift:e} at t = {time}; try a smaller dt")]
    TraceDrift { drift: f64, time: f64 },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
