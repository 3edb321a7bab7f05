use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ApcdError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("enumeration over {requested} nodes exceeds the limit of {limit}")]
    Capacity { requested: usize, limit: usize },

    #[error("parameters diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("schedule rejected: {0}")]
    Schedule(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, ApcdError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(ApcdError::InvalidInput(msg.into()))
}
