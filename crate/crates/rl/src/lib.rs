//! Fingertip-tracking policies: environment, PPO, and deployment on the
//! surrogate system.

pub mod deploy;
pub mod domain;
pub mod env;
pub mod error;
pub mod net;
pub mod policy;
pub mod ppo;

pub use domain::{sample_domain_params, DomainParams};
pub use env::{compute_reward, goal_position, EnvConfig, FingerEnv, Reward, OBS_DIM};
pub use error::{Result, RlError};
pub use policy::{Policy, PolicyConfig, PolicySnapshot, SnapshotMeta};
pub use deploy::{deploy_policy, deploy_metrics, AlphaSchedule, DeployConfig, DeployMetrics, DeployRow, Phase};
pub use ppo::{gae, train_policy, PolicySource, PolicyTraining, PpoConfig, UpdateStats};
