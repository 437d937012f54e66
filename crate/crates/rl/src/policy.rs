//! Gaussian policy with a fixed standard deviation, its value function, and
//! the snapshot format.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tendonsim_estimators::checkpoint::{Container, ContainerKind};

use crate::env::{EnvConfig, OBS_DIM};
use crate::error::{Result, RlError};
use crate::net::{DenseCache, DenseNet};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    /// Standard deviation of the action distribution, rad. Never trained.
    pub fixed_std: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 64, 32],
            value_hidden: vec![128, 64, 32],
            fixed_std: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Policy {
    pub config: PolicyConfig,
    pub mean_net: DenseNet,
    pub value_net: DenseNet,
    pub mean_params: Vec<f32>,
    pub value_params: Vec<f32>,
    /// ln σ; kept outside both parameter vectors so no update can reach it.
    log_std: f64,
}

impl Policy {
    pub fn new(config: PolicyConfig, history: usize) -> Self {
        let n_in = history * OBS_DIM;
        let mean_net = DenseNet::new("pi", n_in, &config.hidden);
        let value_net = DenseNet::new("vf", n_in, &config.value_hidden);
        Self {
            log_std: config.fixed_std.ln(),
            mean_params: vec![0.0; mean_net.param_count()],
            value_params: vec![0.0; value_net.param_count()],
            config,
            mean_net,
            value_net,
        }
    }

    pub fn init<R: rand::Rng>(&mut self, rng: &mut R) {
        self.mean_net.init(rng, &mut self.mean_params, 0.01);
        self.value_net.init(rng, &mut self.value_params, 1.0);
    }

    pub fn log_std(&self) -> f64 {
        self.log_std
    }

    pub fn std(&self) -> f64 {
        self.log_std.exp()
    }

    pub fn input_dim(&self) -> usize {
        self.mean_net.n_in
    }

    pub fn mean(&self, x: &[f32], c: &mut DenseCache<f32>) -> f64 {
        self.mean_net.forward(&self.mean_params, x, c) as f64
    }

    pub fn value(&self, x: &[f32], c: &mut DenseCache<f32>) -> f64 {
        self.value_net.forward(&self.value_params, x, c) as f64
    }

    pub fn log_prob(&self, action: f64, mean: f64) -> f64 {
        let z = (action - mean) / self.std();
        -0.5 * z * z - self.log_std - LN_SQRT_2PI
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    /// "learned" or "ideal".
    pub source: String,
    pub update: usize,
    pub eval_return: f64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct StoredSnapshot {
    policy: PolicyConfig,
    env: EnvConfig,
    meta: SnapshotMeta,
    mean_params: usize,
}

/// A policy frozen for deployment, with the observation contract it was trained under.
#[derive(Debug, Clone)]
pub struct PolicySnapshot {
    pub policy: Policy,
    pub env: EnvConfig,
    pub meta: SnapshotMeta,
}

impl PolicySnapshot {
    pub fn to_container(&self) -> Container {
        let stored = StoredSnapshot {
            policy: self.policy.config.clone(),
            env: self.env.clone(),
            meta: self.meta.clone(),
            mean_params: self.policy.mean_params.len(),
        };
        let mut layout = self.policy.mean_net.layout().clone();
        let shift = layout.total();
        for t in &self.policy.value_net.layout().tensors {
            let mut t = t.clone();
            t.offset += shift;
            layout.tensors.push(t);
        }
        let mut params = self.policy.mean_params.clone();
        params.extend_from_slice(&self.policy.value_params);
        Container {
            kind: ContainerKind::Policy,
            arch_tag: 0,
            meta_json: serde_json::to_string(&stored).expect("snapshot metadata serializes"),
            layout,
            params,
            extras: vec![self.policy.log_std],
        }
    }

    pub fn from_container(c: Container) -> Result<Self> {
        if c.kind != ContainerKind::Policy {
            return Err(RlError::Snapshot("not a policy snapshot".into()));
        }
        let stored: StoredSnapshot =
            serde_json::from_str(&c.meta_json).map_err(|e| RlError::Snapshot(format!("metadata: {e}")))?;
        let mut policy = Policy::new(stored.policy, stored.env.history);
        let n_mean = policy.mean_params.len();
        if stored.mean_params != n_mean || c.params.len() != n_mean + policy.value_params.len() {
            return Err(RlError::Snapshot("parameter count does not match the policy config".into()));
        }
        let [log_std] = c.extras[..] else {
            return Err(RlError::Snapshot(format!("expected 1 extra value, found {}", c.extras.len())));
        };
        policy.mean_params.copy_from_slice(&c.params[..n_mean]);
        policy.value_params.copy_from_slice(&c.params[n_mean..]);
        policy.log_std = log_std;
        Ok(Self {
            policy,
            env: stored.env,
            meta: stored.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(self.to_container().save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(Container::load(path)?)
    }
}
