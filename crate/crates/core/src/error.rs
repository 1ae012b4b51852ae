use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("index {index} out of range for explicit family of length {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("data inconsistent with model: {0}")]
    Inconsistent(String),

    #[error("no convergence after {iterations} iterations (gradient norm {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("campaign failed: {0}")]
    Campaign(String),

    #[error("i/o error: {0}")]
    Io(String),
}
