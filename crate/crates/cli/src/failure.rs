//! Exit codes and the one-line error report.

use std::io::ErrorKind;

use tendonsim_core::CoreError;
use tendonsim_estimators::EstimatorError;
use tendonsim_eval::EvalError;
use tendonsim_rl::RlError;
use tendonsim_simforce::SimforceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Usage,
    Input,
    Config,
    Compute,
    Internal,
}

impl Failure {
    pub fn code(self) -> i32 {
        match self {
            Failure::Internal => 1,
            Failure::Usage => 2,
            Failure::Input => 3,
            Failure::Config => 4,
            Failure::Compute => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Failure::Usage => "usage",
            Failure::Input => "input",
            Failure::Config => "config",
            Failure::Compute => "compute",
            Failure::Internal => "internal",
        }
    }
}

/// Raised by the CLI itself for missing or contradictory arguments.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A run that finished its inputs but produced unusable numbers.
#[derive(Debug)]
pub struct ComputeError(pub String);

impl std::fmt::Display for ComputeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ComputeError {}

fn classify_core(e: &CoreError) -> Failure {
    match e {
        CoreError::InvalidConfig { .. } => Failure::Config,
        CoreError::Io { .. } | CoreError::Csv { .. } | CoreError::Parse { .. } | CoreError::Dataset(_) => Failure::Input,
        CoreError::EpisodeDiverged { .. } | CoreError::IntegrationFailure { .. } | CoreError::NonFiniteServoInput(_) => {
            Failure::Compute
        }
        CoreError::TooFewReadings(_) => Failure::Config,
    }
}

/// The first error in the chain with a known category decides the exit code.
pub fn classify(err: &anyhow::Error) -> Failure {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return Failure::Usage;
        }
        if cause.downcast_ref::<ComputeError>().is_some() {
            return Failure::Compute;
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return Failure::Config;
        }
        if let Some(e) = cause.downcast_ref::<std::io::Error>() {
            return match e.kind() {
                ErrorKind::NotFound | ErrorKind::PermissionDenied => Failure::Input,
                _ => Failure::Internal,
            };
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return classify_core(e);
        }
        if let Some(e) = cause.downcast_ref::<EstimatorError>() {
            return match e {
                EstimatorError::InvalidConfig { .. } | EstimatorError::EmptyDataset(_) => Failure::Config,
                EstimatorError::NonFiniteLoss { .. } => Failure::Compute,
                EstimatorError::Checkpoint { .. } | EstimatorError::Io { .. } => Failure::Input,
                EstimatorError::Core(c) => classify_core(c),
            };
        }
        if let Some(e) = cause.downcast_ref::<SimforceError>() {
            return match e {
                SimforceError::InvalidSetup(_) => Failure::Config,
                SimforceError::NonFiniteForce { .. } => Failure::Compute,
                SimforceError::Core(c) => classify_core(c),
            };
        }
        if let Some(e) = cause.downcast_ref::<RlError>() {
            return match e {
                RlError::InvalidConfig { .. } => Failure::Config,
                RlError::Snapshot(_) => Failure::Input,
                RlError::NonFiniteAction(_) | RlError::Diverged { .. } => Failure::Compute,
                RlError::Sim(_) | RlError::Estimator(_) | RlError::Core(_) => continue,
            };
        }
        if let Some(e) = cause.downcast_ref::<EvalError>() {
            return match e {
                EvalError::InvalidInput(_) => Failure::Config,
                EvalError::MetricMismatch { .. } => Failure::Internal,
                EvalError::Output { .. } => Failure::Internal,
                EvalError::Core(_) | EvalError::Sim(_) | EvalError::Rl(_) => continue,
            };
        }
    }
    Failure::Internal
}

/// `error kind=<kind> code=<n> message=<text>` on a single line.
pub fn report_line(kind: Failure, message: &str) -> String {
    let flat: String = message
        .chars()
        .map(|c| if c == '\n' || c == '\r' { ' ' } else { c })
        .collect();
    format!("error kind={} code={} message={}", kind.name(), kind.code(), flat.trim())
}
