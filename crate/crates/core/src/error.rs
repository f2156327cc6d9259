use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    /// The matrix could not be factorized; for the bordered Hessian this means
    /// the dependent-variable Jacobian is singular or the optimum is not isolated.
    #[error("singular matrix in {context} (pivot {pivot})")]
    Singular { context: &'static str, pivot: usize },

    /// A quantity that must be a variance came out non-positive.
    #[error("definiteness violated at index {index}: value {value:e}")]
    Definiteness { index: usize, value: f64 },

    #[error("specification error: {0}")]
    Spec(String),

    #[error("simulation blew up at t = {time}")]
    BlowUp { time: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}
