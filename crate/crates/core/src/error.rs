use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Validation { what: &'static str, reason: String },

    #[error("simulation diverged at t={time:.4}s: particle {particle} is not finite")]
    Diverged { particle: usize, time: f64 },

    #[error("perception failed: {0}")]
    Perception(String),

    #[error("planning failed: {0}")]
    Planning(String),

    #[error("{path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("malformed {what} at line {line}: {reason}")]
    Parse {
        what: &'static str,
        line: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("png encoding: {0}")]
    Png(#[from] png::EncodingError),

    #[error("png decoding: {0}")]
    PngDecode(#[from] png::DecodingError),
}

impl Error {
    pub(crate) fn validation(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Validation {
            what,
            reason: reason.into(),
        }
    }
}
