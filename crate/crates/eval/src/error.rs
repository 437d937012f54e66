use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation input: {0}")]
    InvalidInput(String),

    #[error("rmse cross-check failed for `{trace}`: {fast} vs two-pass {reference}")]
    MetricMismatch { trace: String, fast: f64, reference: f64 },

    #[error("writing {path}: {reason}")]
    Output { path: PathBuf, reason: String },

    #[error(transparent)]
    Core(#[from] tendonsim_core::CoreError),

    #[error(transparent)]
    Sim(#[from] tendonsim_simforce::SimforceError),

    #[error(transparent)]
    Rl(#[from] tendonsim_rl::RlError),
}

pub type Result<T> = std::result::Result<T, EvalError>;
