//! A trained estimator: architecture, weights, and the normalization it was trained with.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{Container, ContainerKind};
use crate::error::{EstimatorError, Result};
use crate::network::{Arch, ArchConfig, Net, Network, NetworkCache};
use crate::rnn::RnnStream;
use crate::window::{HistoryWindow, Normalizer, CHANNELS};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub train_config_hash: String,
    pub dataset_hash: String,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_rmse: f64,
}

#[derive(Serialize, Deserialize)]
struct StoredMeta {
    config: ArchConfig,
    meta: ModelMeta,
}

#[derive(Debug, Clone)]
pub struct EstimatorModel {
    pub config: ArchConfig,
    pub net: Network,
    pub params: Vec<f32>,
    pub normalizer: Normalizer,
    pub meta: ModelMeta,
}

impl EstimatorModel {
    pub fn new(config: ArchConfig, params: Vec<f32>, normalizer: Normalizer, meta: ModelMeta) -> Result<Self> {
        let net = config.build();
        if params.len() != net.layout().total() {
            return Err(EstimatorError::invalid(
                "params",
                format!("{} values for a network of {}", params.len(), net.layout().total()),
            ));
        }
        Ok(Self {
            config,
            net,
            params,
            normalizer,
            meta,
        })
    }

    pub fn arch(&self) -> Arch {
        self.config.arch()
    }

    pub fn history(&self) -> usize {
        self.net.history()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Force in newtons for a raw (unnormalized) window.
    pub fn predict(&self, window: &HistoryWindow) -> f64 {
        self.predict_values(&window.values, &mut InferenceScratch::default())
    }

    /// As [`EstimatorModel::predict`] on a flattened `history × 3` window,
    /// reusing `scratch` between calls.
    pub fn predict_values(&self, values: &[f64], scratch: &mut InferenceScratch) -> f64 {
        self.normalizer.normalize_into(values, &mut scratch.input);
        let y = self.net.forward(&self.params, &scratch.input, &mut scratch.cache);
        self.normalizer.denormalize(y as f64)
    }

    /// Step-by-step inference carrying the hidden state. Only recurrent models stream.
    pub fn stream(&self) -> Option<ModelStream<'_>> {
        match &self.net {
            Network::Rnn(rnn) => Some(ModelStream {
                model: self,
                state: RnnStream::new(rnn.config.hidden),
                row: [0.0; CHANNELS],
            }),
            _ => None,
        }
    }

    pub fn to_container(&self) -> Container {
        let meta = StoredMeta {
            config: self.config.clone(),
            meta: self.meta.clone(),
        };
        let n = &self.normalizer;
        let mut extras = Vec::with_capacity(2 * CHANNELS + 2);
        extras.extend_from_slice(&n.input_mean);
        extras.extend_from_slice(&n.input_std);
        extras.push(n.output_mean);
        extras.push(n.output_std);
        Container {
            kind: ContainerKind::Estimator,
            arch_tag: self.arch().tag(),
            meta_json: serde_json::to_string(&meta).expect("metadata serializes"),
            layout: self.net.layout().clone(),
            params: self.params.clone(),
            extras,
        }
    }

    pub fn from_container(c: Container, path: &Path) -> Result<Self> {
        let err = |reason: String| EstimatorError::checkpoint(path, reason);
        if c.kind != ContainerKind::Estimator {
            return Err(err("not an estimator checkpoint".into()));
        }
        let stored: StoredMeta = serde_json::from_str(&c.meta_json).map_err(|e| err(format!("metadata: {e}")))?;
        if Arch::from_tag(c.arch_tag) != Some(stored.config.arch()) {
            return Err(err(format!("arch tag {} disagrees with metadata", c.arch_tag)));
        }
        let net = stored.config.build();
        if net.layout() != &c.layout {
            return Err(err("tensor table does not match the architecture config".into()));
        }
        if c.extras.len() != 2 * CHANNELS + 2 {
            return Err(err(format!("normalizer block has {} values", c.extras.len())));
        }
        let e = &c.extras;
        let normalizer = Normalizer {
            input_mean: [e[0], e[1], e[2]],
            input_std: [e[3], e[4], e[5]],
            output_mean: e[6],
            output_std: e[7],
        };
        if !normalizer.is_valid() {
            return Err(err("normalizer has non-finite or sub-floor entries".into()));
        }
        Ok(Self {
            config: stored.config,
            net,
            params: c.params,
            normalizer,
            meta: stored.meta,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(Container::load(path)?, path)
    }
}

/// Buffers reused across forward passes.
#[derive(Debug, Default)]
pub struct InferenceScratch {
    cache: NetworkCache<f32>,
    input: Vec<f32>,
}

pub struct ModelStream<'a> {
    model: &'a EstimatorModel,
    state: RnnStream<f32>,
    row: [f32; CHANNELS],
}

impl ModelStream<'_> {
    pub fn reset(&mut self) {
        self.state.reset();
    }

    /// Consumes one raw (θ_d, θ, θ̇) row and returns the force for the sequence so far.
    pub fn step(&mut self, row: [f64; CHANNELS]) -> f64 {
        let m = self.model;
        let Network::Rnn(rnn) = &m.net else {
            unreachable!("streams are only built for recurrent models")
        };
        m.normalizer.normalize_row(&row, &mut self.row);
        let y = self.state.step(rnn, &m.params, &self.row);
        m.normalizer.denormalize(y as f64)
    }
}
