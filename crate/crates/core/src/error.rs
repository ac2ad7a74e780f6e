use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GsanError>;

#[derive(Debug, Error)]
pub enum GsanError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("state transition factor exp(-delta*A) = {factor} exceeds 1 at channel {channel}, state {state}")]
    UnstableDecay {
        factor: f64,
        channel: usize,
        state: usize,
    },

    #[error("tape already consumed by a backward pass")]
    TapeConsumed,

    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("variable does not belong to this tape")]
    ForeignVar,

    #[error("index {index} out of range for {what} of size {len}")]
    OutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("layer {index}: {source}")]
    Layer {
        index: usize,
        #[source]
        source: Box<GsanError>,
    },

    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },
}

impl GsanError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        GsanError::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GsanError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        GsanError::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors that come from numerics blowing up rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            GsanError::NonFinite { .. }
            | GsanError::UnstableDecay { .. }
            | GsanError::Diverged { .. } => true,
            GsanError::Layer { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
