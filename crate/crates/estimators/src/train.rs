//! Minibatch training with Adam(W), cosine decay, and best-validation selection.
//!
//! Gradients are accumulated over fixed-size chunks of each batch and the
//! chunk results are summed in order, so the result does not depend on how
//! many threads evaluate the chunks.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tendonsim_core::datagen::{sha256_hex, Dataset, Episode, Split};

use crate::error::{EstimatorError, Result};
use crate::model::{EstimatorModel, ModelMeta};
use crate::network::{ArchConfig, Net, Network, NetworkCache};
use crate::window::{Normalizer, WindowPool, WindowRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    Mse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_schedule: LrSchedule,
    pub weight_decay: f64,
    pub seed: u64,
    pub loss: Loss,
    /// Windows drawn (without replacement) from the stride-1 training pool
    /// each epoch; `None` uses the whole pool.
    pub windows_per_epoch: Option<usize>,
    /// Record step between validation windows.
    pub val_stride: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub grad_clip: Option<f64>,
    /// Zero the final layer at initialization (untrained output = mean force).
    pub zero_init_head: bool,
    /// Windows per gradient chunk; fixes the summation order.
    pub chunk_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            learning_rate: 1e-3,
            lr_schedule: LrSchedule::Cosine,
            weight_decay: 0.0,
            seed: 0,
            loss: Loss::Mse,
            windows_per_epoch: None,
            val_stride: 4,
            grad_clip: Some(1.0),
            zero_init_head: false,
            chunk_size: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs as f64),
            ("batch_size", self.batch_size as f64),
            ("learning_rate", self.learning_rate),
            ("val_stride", self.val_stride as f64),
            ("chunk_size", self.chunk_size as f64),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EstimatorError::invalid(field, format!("must be positive, got {v}")));
            }
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(EstimatorError::invalid("weight_decay", "must be non-negative"));
        }
        if self.windows_per_epoch == Some(0) {
            return Err(EstimatorError::invalid("windows_per_epoch", "must be positive"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(EstimatorError::invalid("grad_clip", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn hash(&self, arch: &ArchConfig) -> String {
        let text = serde_json::to_string(&(arch, self)).expect("config serializes");
        sha256_hex(text.as_bytes())
    }

    pub fn learning_rate_at(&self, step: usize, total: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Cosine => {
                let frac = step as f64 / total.max(1) as f64;
                0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean normalized squared error over the epoch's batches.
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_rmse: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: EstimatorModel,
    pub curve: Vec<EpochLog>,
    /// Normalized training loss of the last batch.
    pub final_loss: f64,
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f32>,
    v: Vec<f32>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f32], grad: &[f32], lr: f64, weight_decay: f64) {
        self.t += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = (lr * c2.sqrt() / c1) as f32;
        let eps = (self.eps * c2.sqrt()) as f32;
        let decay = (1.0 - lr * weight_decay) as f32;
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g;
            params[i] = params[i] * decay - step * self.m[i] / (self.v[i].sqrt() + eps);
        }
    }
}

fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
}

/// Sum over chunks of (squared-error sum, gradient of the mean loss).
fn batch_gradient(
    net: &Network,
    params: &[f32],
    pool: &WindowPool<'_>,
    norm: &Normalizer,
    batch: &[WindowRef],
    chunk_size: usize,
) -> (f64, Vec<f32>) {
    let scale = 2.0 / batch.len() as f32;
    let parts: Vec<(f64, Vec<f32>)> = batch
        .par_chunks(chunk_size)
        .map(|chunk| {
            let mut grad = vec![0.0f32; params.len()];
            let mut cache = NetworkCache::default();
            let mut x = Vec::new();
            let mut sse = 0.0;
            for &w in chunk {
                pool.normalized(w, norm, &mut x);
                let target = norm.normalize_target(pool.target(w)) as f32;
                let err = net.forward(params, &x, &mut cache) - target;
                sse += (err as f64) * (err as f64);
                net.backward(params, &x, &mut cache, scale * err, &mut grad);
            }
            (sse, grad)
        })
        .collect();
    let mut total = 0.0;
    let mut grad = vec![0.0f32; params.len()];
    for (sse, g) in parts {
        total += sse;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    (total, grad)
}

/// Mean normalized squared error and RMSE in newtons over `refs`.
pub fn evaluate_pool(
    net: &Network,
    params: &[f32],
    pool: &WindowPool<'_>,
    norm: &Normalizer,
    chunk_size: usize,
) -> (f64, f64) {
    let sums: Vec<(f64, f64)> = pool
        .refs
        .par_chunks(chunk_size.max(1) * 8)
        .map(|chunk| {
            let mut cache = NetworkCache::default();
            let mut x = Vec::new();
            let (mut sn, mut sf) = (0.0, 0.0);
            for &w in chunk {
                pool.normalized(w, norm, &mut x);
                let y = net.forward(params, &x, &mut cache) as f64;
                let target = pool.target(w);
                sn += (y - norm.normalize_target(target)).powi(2);
                sf += (norm.denormalize(y) - target).powi(2);
            }
            (sn, sf)
        })
        .collect();
    let n = pool.len().max(1) as f64;
    let (sn, sf) = sums.iter().fold((0.0, 0.0), |acc, s| (acc.0 + s.0, acc.1 + s.1));
    (sn / n, (sf / n).sqrt())
}

/// Trains on the train split, selects the epoch with the lowest validation loss.
pub fn train_estimator(ds: &Dataset, arch: &ArchConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_estimator_with(ds, arch, cfg, |_| {})
}

/// As [`train_estimator`], reporting each epoch to `on_epoch`.
pub fn train_estimator_with(
    ds: &Dataset,
    arch: &ArchConfig,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train: Vec<&Episode> = ds.split(Split::Train).collect();
    let val: Vec<&Episode> = ds.split(Split::Validation).collect();
    if train.is_empty() || val.is_empty() {
        return Err(EstimatorError::EmptyDataset("training needs train and validation episodes".into()));
    }
    let net = arch.build();
    let norm = Normalizer::fit(train.iter().copied())?;
    let train_pool = WindowPool::new(train, net.history(), 1);
    let val_pool = WindowPool::new(val, net.history(), cfg.val_stride);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = vec![0.0f32; net.layout().total()];
    net.init(&mut rng, &mut params, cfg.zero_init_head);
    let mut adam = Adam::new(params.len());

    let per_epoch = cfg.windows_per_epoch.unwrap_or(train_pool.len()).min(train_pool.len());
    let batches_per_epoch = per_epoch.div_ceil(cfg.batch_size);
    let total_steps = batches_per_epoch * cfg.epochs;
    let mut order = train_pool.refs.clone();

    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0usize, f64::NAN, params.clone());
    let mut step = 0;
    let mut final_loss = f64::NAN;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sse = 0.0;
        let mut lr = cfg.learning_rate;
        for (b, batch) in order[..per_epoch].chunks(cfg.batch_size).enumerate() {
            let (sse, mut grad) = batch_gradient(&net, &params, &train_pool, &norm, batch, cfg.chunk_size);
            let loss = sse / batch.len() as f64;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(EstimatorError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    param_norm: l2_norm(&params),
                });
            }
            if let Some(clip) = cfg.grad_clip {
                let gn = l2_norm(&grad);
                if gn > clip {
                    let s = (clip / gn) as f32;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            lr = cfg.learning_rate_at(step, total_steps);
            adam.step(&mut params, &grad, lr, cfg.weight_decay);
            step += 1;
            epoch_sse += sse;
            final_loss = loss;
        }
        let (val_loss, val_rmse) = evaluate_pool(&net, &params, &val_pool, &norm, cfg.chunk_size);
        let log = EpochLog {
            epoch,
            learning_rate: lr,
            train_loss: epoch_sse / per_epoch as f64,
            val_loss,
            val_rmse,
        };
        on_epoch(&log);
        curve.push(log);
        if val_loss < best.0 {
            best = (val_loss, epoch, val_rmse, params.clone());
        }
    }

    let meta = ModelMeta {
        train_config_hash: cfg.hash(arch),
        dataset_hash: ds.content_hash(),
        epochs_run: cfg.epochs,
        best_epoch: best.1,
        best_val_rmse: best.2,
    };
    let model = EstimatorModel::new(arch.clone(), best.3, norm, meta)?;
    Ok(TrainOutcome {
        model,
        curve,
        final_loss,
    })
}
