//! Experiments that score estimators and policies against the surrogate
//! system. Each returns a [`MetricReport`] plus the traces behind it.

pub mod error;
pub mod force;
pub mod gap;
pub mod report;
pub mod setup;
pub mod transfer;

pub use error::{EvalError, Result};
pub use force::{eval_contact, eval_generalization, eval_perturbed_sine, Blocking, NamedModel};
pub use gap::eval_sim2real_gap;
pub use report::{ConditionMetrics, ExperimentOutput, MetricReport, Trace};
pub use setup::{EvalSetup, SineSpec};
pub use transfer::{eval_policy_transfer, TransferConfig};
