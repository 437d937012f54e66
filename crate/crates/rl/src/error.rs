use thiserror::Error;

use crate::ppo::UpdateStats;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("non-finite action {0}")]
    NonFiniteAction(f64),

    #[error("invalid rl config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("training diverged at update {update}: {reason} (last {} updates in trace)", trace.len())]
    Diverged {
        update: usize,
        reason: String,
        trace: Vec<UpdateStats>,
    },

    #[error("policy snapshot: {0}")]
    Snapshot(String),

    #[error(transparent)]
    Sim(#[from] tendonsim_simforce::SimforceError),

    #[error(transparent)]
    Estimator(#[from] tendonsim_estimators::EstimatorError),

    #[error(transparent)]
    Core(#[from] tendonsim_core::CoreError),
}

impl RlError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        RlError::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, RlError>;
