use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {context} at coordinate {index}")]
    NonFinite { context: String, index: usize },

    #[error("equilibrium search did not converge in {iterations} iterations (last residual {residual:.3e})")]
    NoEquilibrium { iterations: usize, residual: f64 },

    #[error("invalid embedding: {0}")]
    Embedding(String),

    #[error("too many scheduling parameters ({0} > 20); reduce the parameter count")]
    TooManyParameters(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("generalized H2 norm is unbounded with direct feedthrough (D != 0)")]
    DirectFeedthrough,

    #[error("no certificate in this class: {0}")]
    Infeasible(String),

    #[error("bisection bracket failed: problem infeasible at upper end {0}")]
    BracketFailed(f64),

    #[error("solver failure: {0}")]
    Numerical(String),

    #[error("integration failed at step {step} (t = {time}): non-finite state")]
    Integration { step: usize, time: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
