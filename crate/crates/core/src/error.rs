use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input violated a domain constraint (range, shape, count).
    #[error("validation error: {0}")]
    Validation(String),

    /// A statistic is undefined for the given data (zero variance etc).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("manifest has {} invalid record(s): {}", .0.len(), format_issues(.0))]
    Manifest(Vec<RecordIssue>),

    #[error("pretrained weights not found at {path}: expected a safetensors export of torchvision `efficientnet_b1` (keys `features.*`)")]
    MissingWeights { path: PathBuf },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch} (lr {learning_rate})")]
    NonFiniteLoss {
        loss: f64,
        epoch: usize,
        batch: usize,
        learning_rate: f64,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Yaml(#[from] serde_yaml::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}

/// One problem found while validating a manifest record.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RecordIssue {
    pub id: String,
    pub message: String,
}

fn format_issues(issues: &[RecordIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("[{}] {}", i.id, i.message))
        .collect::<Vec<_>>()
        .join("; ")
}
