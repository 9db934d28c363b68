use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("entry {value} exceeds the bound {bound}")]
    Bound { value: f64, bound: f64 },
    #[error("size error: {0}")]
    Size(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite derivative at node {node} (t = {time})")]
    Integration { node: usize, time: f64 },
    #[error("{context} diverged at t = {time} (norm {norm:e})")]
    Divergence {
        context: String,
        time: f64,
        norm: f64,
    },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("wrong solution mode: {0}")]
    Mode(String),
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("simulation blew up at step {step}")]
    BlowUp { step: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
