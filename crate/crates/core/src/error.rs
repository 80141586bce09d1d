use thiserror::Error;

/// Errors raised by the problem oracles, flows, steppers and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("objective evaluation produced non-finite values at coordinates {coords:?}")]
    Evaluation { coords: Vec<usize> },

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("domain error at index {index}: value {value:e} is outside the admissible region")]
    Domain { index: usize, value: f64 },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("capability missing: {0}")]
    Capability(&'static str),

    #[error("unknown {kind} `{name}`; available: {}", available.join(", "))]
    Lookup {
        kind: &'static str,
        name: String,
        available: Vec<&'static str>,
    },

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    Solver { iterations: usize, residual: f64 },

    #[error("linear solve failed on an ill-conditioned matrix (condition estimate {kappa:e})")]
    Solve { kappa: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
