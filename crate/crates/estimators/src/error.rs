use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("invalid training config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch} (parameter norm {param_norm:.4e})")]
    NonFiniteLoss { epoch: usize, batch: usize, param_norm: f64 },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] tendonsim_core::CoreError),
}

impl EstimatorError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        EstimatorError::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn checkpoint(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        EstimatorError::Checkpoint {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, EstimatorError>;
