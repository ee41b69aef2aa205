//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the collection/synthesis/training stack.
#[derive(Error, Debug)]
pub enum HogsError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{path}:{line}: parse error: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid data: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index {index} out of range for length {len}")]
    Bounds { index: usize, len: usize },

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}: {msg}")]
    Training { epoch: usize, msg: String },

    #[error("{phase} phase failed: {source}")]
    Phase {
        phase: &'static str,
        #[source]
        source: Box<HogsError>,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HogsError {
    /// Tag an error with the pipeline phase it surfaced in.
    pub fn in_phase(self, phase: &'static str) -> Self {
        HogsError::Phase {
            phase,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, HogsError>;
