use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("bad field file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("config validation failed for `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("solution blew up at t = {time} (last finite sup-norm {sup_norm:e})")]
    BlowUp { time: f64, sup_norm: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
