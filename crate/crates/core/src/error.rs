use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the forecasting pipeline.
#[derive(Debug, Error)]
pub enum SffpError {
    #[error("invalid transform length {0}: need at least 2 points")]
    InvalidLength(usize),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("signal has zero energy, spectral entropy is undefined")]
    ZeroEnergy,

    #[error("revin gamma for channel {channel} is zero, denormalization is undefined")]
    DegenerateAffine { channel: usize },

    #[error("forward pass diverged: non-finite value in {stage}")]
    Diverged { stage: &'static str },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("timestamps not strictly increasing at line {line}")]
    Ordering { line: usize },

    #[error("index {index} out of range for {what} of length {len}")]
    Index { what: &'static str, index: usize, len: usize },

    #[error("gradient check failed: relative error {max_rel_error:e} in {group}")]
    GradientMismatch { max_rel_error: f64, group: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl SffpError {
    pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Self {
        SffpError::Shape {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SffpError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = SffpError> = std::result::Result<T, E>;
