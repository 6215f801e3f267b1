use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the compressor.
#[derive(Debug, Error)]
pub enum FadeError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("model diverged at step {step}: {detail}")]
    Divergence { step: u64, detail: String },

    #[error("corrupt bitstream: stream {stream}, step {step}: {detail}")]
    Corruption {
        stream: usize,
        step: u64,
        detail: String,
    },

    #[error("bitstream exhausted after {consumed} bytes")]
    Exhausted { consumed: usize },

    #[error("format error: {0}")]
    Format(String),

    #[error("{what} checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum {
        what: &'static str,
        stored: u32,
        computed: u32,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("pipeline protocol violation: {0}")]
    Protocol(String),
}

impl FadeError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        FadeError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            FadeError::Format(_) | FadeError::Corruption { .. } | FadeError::Exhausted { .. } => 2,
            FadeError::Checksum { .. } => 3,
            FadeError::Divergence { .. } | FadeError::NonFinite(_) => 4,
            FadeError::Usage(_) | FadeError::Config(_) => 5,
            _ => 1,
        }
    }
}

pub type Result<T, E = FadeError> = std::result::Result<T, E>;
