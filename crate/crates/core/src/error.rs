//! Crate-wide error type and result alias.

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced by any stemseal module.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid audio: {0}")]
    Audio(String),

    #[error("invalid message: {0}")]
    Message(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Data(String),

    #[error("separation error: {0}")]
    Separation(String),

    #[error("training diverged at iteration {iteration} (non-finite loss){}",
        .last_checkpoint.as_ref().map(|p| format!("; last good checkpoint: {}", p.display())).unwrap_or_default())]
    TrainingDiverged {
        iteration: u64,
        last_checkpoint: Option<PathBuf>,
    },

    #[error("training error: {0}")]
    Training(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 1 usage, 2 data, 3 training.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Message(_) => 1,
            Error::TrainingDiverged { .. } | Error::Training(_) => 3,
            _ => 2,
        }
    }
}
