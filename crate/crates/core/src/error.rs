use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("integration failure at t={t:.4}s: {detail}")]
    IntegrationFailure { t: f64, detail: String },

    #[error("servo received non-finite input: {0}")]
    NonFiniteServoInput(&'static str),

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("load-cell resampling needs at least 2 readings, got {0}")]
    TooFewReadings(usize),

    #[error("episode for system `{system_id}` (family {family}, seed {seed}) diverged: {source}")]
    EpisodeDiverged {
        system_id: String,
        family: String,
        seed: u64,
        #[source]
        source: Box<CoreError>,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

impl CoreError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CoreError::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
