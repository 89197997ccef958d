use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by `gazerank-core`.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("metric {metric} is undefined: {reason}")]
    UndefinedMetric {
        metric: &'static str,
        reason: &'static str,
    },

    #[error("training diverged at epoch {epoch}, step {step}: loss = {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error("dataset load aborted: {malformed} of {total} rows malformed")]
    LoadAborted {
        malformed: usize,
        total: usize,
        issues: Vec<String>,
    },

    #[error("unknown session {0}")]
    SessionNotFound(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("not enough unanswered pairs: requested {requested}, {remaining} remaining")]
    InsufficientPairs { requested: usize, remaining: usize },

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
