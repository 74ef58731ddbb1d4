use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SqaError {
    /// A caller broke a documented precondition (dimensions, parameter ranges).
    #[error("contract violation: {0}")]
    Contract(String),

    /// The smooth function was queried outside its domain.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line search step fell below {min_step:e} at outer iteration {iteration}")]
    LineSearch { iteration: usize, min_step: f64 },

    #[error("inner solver could not decrease the model at outer iteration {iteration}")]
    InnerFailure { iteration: usize },

    #[error("report encoding: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SqaError>;

pub(crate) fn check_dim(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(SqaError::Contract(format!(
            "{what} has dimension {got}, expected {expected}"
        )));
    }
    Ok(())
}
