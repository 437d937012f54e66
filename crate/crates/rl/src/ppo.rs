//! Proximal policy optimization with GAE over parallel, domain-randomized
//! environments. The action standard deviation is a constant: it sits outside
//! every optimized parameter vector, so no update can change it.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tendonsim_core::config::{FingerConfig, SimRates};
use tendonsim_core::datagen::derive_seed;
use tendonsim_estimators::train::Adam;
use tendonsim_estimators::EstimatorModel;
use tendonsim_simforce::SourceSpec;

use crate::domain::DomainParams;
use crate::env::{EnvConfig, FingerEnv};
use crate::error::{Result, RlError};
use crate::net::DenseCache;
use crate::policy::{Policy, PolicyConfig, PolicySnapshot, SnapshotMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_ratio: f64,
    pub epochs_per_update: usize,
    pub minibatches: usize,
    pub num_envs: usize,
    pub horizon: usize,
    pub value_coef: f64,
    pub lr: f64,
    pub total_updates: usize,
    /// Per-network global gradient-norm clip.
    pub max_grad_norm: f64,
    pub normalize_advantages: bool,
    /// Updates between deterministic evaluations (and snapshots).
    pub eval_every: usize,
    /// Goal angles of the evaluation episodes, rad.
    pub eval_alphas: Vec<f64>,
    /// Value loss above which training is declared divergent.
    pub divergence_value_loss: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            gae_lambda: 0.95,
            clip_ratio: 0.2,
            epochs_per_update: 4,
            minibatches: 4,
            num_envs: 64,
            horizon: 128,
            value_coef: 0.5,
            lr: 3e-4,
            total_updates: 2000,
            max_grad_norm: 0.5,
            normalize_advantages: true,
            eval_every: 50,
            eval_alphas: vec![0.2, 0.6, 1.0, 1.4],
            divergence_value_loss: 1e6,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(RlError::invalid("gamma", "must be in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(RlError::invalid("gae_lambda", "must be in [0, 1]"));
        }
        let positive = [
            ("clip_ratio", self.clip_ratio),
            ("epochs_per_update", self.epochs_per_update as f64),
            ("minibatches", self.minibatches as f64),
            ("num_envs", self.num_envs as f64),
            ("horizon", self.horizon as f64),
            ("lr", self.lr),
            ("total_updates", self.total_updates as f64),
            ("max_grad_norm", self.max_grad_norm),
            ("eval_every", self.eval_every as f64),
            ("divergence_value_loss", self.divergence_value_loss),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RlError::invalid(field, format!("must be positive, got {v}")));
            }
        }
        if self.value_coef < 0.0 {
            return Err(RlError::invalid("value_coef", "must be non-negative"));
        }
        if self.minibatches > self.num_envs * self.horizon {
            return Err(RlError::invalid("minibatches", "more minibatches than samples"));
        }
        if self.eval_alphas.is_empty() {
            return Err(RlError::invalid("eval_alphas", "need at least one evaluation goal"));
        }
        Ok(())
    }
}

/// Simulation force source a policy trains against.
#[derive(Debug, Clone)]
pub enum PolicySource {
    Learned(Arc<EstimatorModel>),
    Ideal { gain: f64 },
}

impl PolicySource {
    pub fn spec(&self) -> SourceSpec {
        match self {
            PolicySource::Learned(m) => SourceSpec::Learned(m.clone()),
            PolicySource::Ideal { gain } => SourceSpec::Ideal { gain: *gain },
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicySource::Learned(_) => "learned",
            PolicySource::Ideal { .. } => "ideal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub update: usize,
    pub mean_step_reward: f64,
    /// Mean return of episodes that finished during this roll-out (NaN if none).
    pub episode_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub eval_return: Option<f64>,
}

/// Generalized advantage estimates for one environment's trajectory.
///
/// `next_values[t]` is V(s_{t+1}); `terminal[t]` zeroes it (true episode end);
/// `episode_end[t]` stops the recursion (time limits bootstrap but do not chain).
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    next_values: &[f64],
    terminal: &[bool],
    episode_end: &[bool],
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let bootstrap = if terminal[t] { 0.0 } else { next_values[t] };
        let delta = rewards[t] + gamma * bootstrap - values[t];
        let carry = if episode_end[t] { 0.0 } else { running };
        running = delta + gamma * lambda * carry;
        adv[t] = running;
    }
    adv
}

struct Worker {
    env: FingerEnv,
    rng: ChaCha8Rng,
    input: Vec<f32>,
    mean_cache: DenseCache<f32>,
    value_cache: DenseCache<f32>,
    episode_return: f64,
}

struct StepSample {
    obs: Vec<f32>,
    action: f64,
    log_prob: f64,
    value: f64,
    reward: f64,
    done: bool,
    /// V of the final observation when the episode ended on this step.
    final_value: f64,
    finished_return: Option<f64>,
}

/// A flattened roll-out ready for optimization.
#[derive(Debug, Default)]
pub struct RolloutBuffer {
    pub obs: Vec<Vec<f32>>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct UpdateLosses {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Optimizer state for both networks.
pub struct PpoLearner {
    pub mean_adam: Adam,
    pub value_adam: Adam,
}

impl PpoLearner {
    pub fn new(policy: &Policy) -> Self {
        Self {
            mean_adam: Adam::new(policy.mean_params.len()),
            value_adam: Adam::new(policy.value_params.len()),
        }
    }
}

fn clip_norm(g: &mut [f32], max: f64) {
    let n = g.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
    if n > max {
        let s = (max / n) as f32;
        g.iter_mut().for_each(|x| *x *= s);
    }
}

const GRAD_CHUNK: usize = 64;

/// Clipped-surrogate and value-regression epochs over `buf`.
pub fn ppo_update(
    policy: &mut Policy,
    learner: &mut PpoLearner,
    buf: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut ChaCha8Rng,
) -> UpdateLosses {
    let n = buf.len();
    let mut adv = buf.advantages.clone();
    if cfg.normalize_advantages && n > 1 {
        let mean = adv.iter().sum::<f64>() / n as f64;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
        if var.sqrt() > 1e-8 {
            let inv = 1.0 / var.sqrt();
            adv.iter_mut().for_each(|a| *a = (*a - mean) * inv);
        }
    }
    let std = policy.std();
    let mut idx: Vec<usize> = (0..n).collect();
    let mb = n.div_ceil(cfg.minibatches);
    let mut totals = UpdateLosses::default();
    let mut counted = 0usize;
    for _ in 0..cfg.epochs_per_update {
        idx.shuffle(rng);
        for batch in idx.chunks(mb) {
            let m = batch.len() as f64;
            let pol: &Policy = policy;
            let parts: Vec<(Vec<f32>, Vec<f32>, [f64; 4])> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut gm = vec![0.0f32; pol.mean_params.len()];
                    let mut gv = vec![0.0f32; pol.value_params.len()];
                    let mut mc = DenseCache::default();
                    let mut vc = DenseCache::default();
                    let mut acc = [0.0; 4];
                    for &i in chunk {
                        let x = &buf.obs[i];
                        let mu = pol.mean_net.forward(&pol.mean_params, x, &mut mc) as f64;
                        let logp = pol.log_prob(buf.actions[i], mu);
                        let ratio = (logp - buf.log_probs[i]).exp();
                        let a = adv[i];
                        let clipped = ratio.clamp(1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio);
                        let unclipped_obj = ratio * a;
                        let clipped_obj = clipped * a;
                        acc[0] += -unclipped_obj.min(clipped_obj);
                        acc[2] += buf.log_probs[i] - logp;
                        if (ratio - 1.0).abs() > cfg.clip_ratio {
                            acc[3] += 1.0;
                        }
                        // The gradient flows only where the unclipped term is the minimum.
                        if unclipped_obj <= clipped_obj {
                            let dlogp_dmu = (buf.actions[i] - mu) / (std * std);
                            let d_mu = -a * ratio * dlogp_dmu / m;
                            if d_mu != 0.0 {
                                pol.mean_net.backward(&pol.mean_params, x, &mut mc, d_mu as f32, &mut gm);
                            }
                        }
                        let v = pol.value_net.forward(&pol.value_params, x, &mut vc) as f64;
                        let err = v - buf.returns[i];
                        acc[1] += err * err;
                        let d_v = 2.0 * cfg.value_coef * err / m;
                        pol.value_net.backward(&pol.value_params, x, &mut vc, d_v as f32, &mut gv);
                    }
                    (gm, gv, acc)
                })
                .collect();
            let mut gm = vec![0.0f32; policy.mean_params.len()];
            let mut gv = vec![0.0f32; policy.value_params.len()];
            let mut acc = [0.0; 4];
            for (pm, pv, pa) in parts {
                gm.iter_mut().zip(&pm).for_each(|(a, b)| *a += b);
                gv.iter_mut().zip(&pv).for_each(|(a, b)| *a += b);
                for k in 0..4 {
                    acc[k] += pa[k];
                }
            }
            clip_norm(&mut gm, cfg.max_grad_norm);
            clip_norm(&mut gv, cfg.max_grad_norm);
            learner.mean_adam.step(&mut policy.mean_params, &gm, cfg.lr, 0.0);
            learner.value_adam.step(&mut policy.value_params, &gv, cfg.lr, 0.0);
            totals.policy_loss += acc[0];
            totals.value_loss += acc[1];
            totals.approx_kl += acc[2];
            totals.clip_fraction += acc[3];
            counted += batch.len();
        }
    }
    let c = counted.max(1) as f64;
    UpdateLosses {
        policy_loss: totals.policy_loss / c,
        value_loss: totals.value_loss / c,
        approx_kl: totals.approx_kl / c,
        clip_fraction: totals.clip_fraction / c,
    }
}

/// Deterministic (mean-action) return on the nominal plant, one episode per α.
pub fn evaluate_policy(
    policy: &Policy,
    env_cfg: &EnvConfig,
    nominal: &FingerConfig,
    source: &SourceSpec,
    rates: SimRates,
    alphas: &[f64],
) -> Result<f64> {
    let returns: Vec<Result<f64>> = alphas
        .par_iter()
        .map(|&alpha| {
            let mut env = FingerEnv::new(env_cfg.clone(), nominal.clone(), source.clone(), rates)?;
            env.reset_with(alpha, DomainParams::NOMINAL)?;
            let mut input = Vec::new();
            let mut cache = DenseCache::default();
            let mut total = 0.0;
            loop {
                env.policy_input(&mut input);
                let info = env.step(policy.mean(&input, &mut cache))?;
                total += info.reward.total;
                if info.done {
                    return Ok(total);
                }
            }
        })
        .collect();
    let mut sum = 0.0;
    for r in returns {
        sum += r?;
    }
    Ok(sum / alphas.len() as f64)
}

pub struct PolicyTrainOutcome {
    /// Snapshot with the highest evaluation return.
    pub best: PolicySnapshot,
    /// Every evaluated snapshot, in update order.
    pub checkpoints: Vec<PolicySnapshot>,
    pub stats: Vec<UpdateStats>,
}

pub struct PolicyTraining<'a> {
    pub source: PolicySource,
    pub nominal: FingerConfig,
    pub rates: SimRates,
    pub env: EnvConfig,
    pub policy: PolicyConfig,
    pub ppo: PpoConfig,
    pub seed: u64,
    pub on_update: Option<Box<dyn FnMut(&UpdateStats) + 'a>>,
}

impl PolicyTraining<'_> {
    pub fn new(source: PolicySource, nominal: FingerConfig, seed: u64) -> Self {
        Self {
            source,
            nominal,
            rates: SimRates::default(),
            env: EnvConfig::default(),
            policy: PolicyConfig::default(),
            ppo: PpoConfig::default(),
            seed,
            on_update: None,
        }
    }
}

pub fn train_policy(mut t: PolicyTraining<'_>) -> Result<PolicyTrainOutcome> {
    t.env.validate()?;
    t.ppo.validate()?;
    if !(t.policy.fixed_std > 0.0 && t.policy.fixed_std.is_finite()) {
        return Err(RlError::invalid("fixed_std", "must be positive"));
    }
    let cfg = &t.ppo;
    let spec = t.source.spec();
    let mut policy = Policy::new(t.policy.clone(), t.env.history);
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(t.seed, 0, 0));
    policy.init(&mut init_rng);
    let mut learner = PpoLearner::new(&policy);
    let mut update_rng = ChaCha8Rng::seed_from_u64(derive_seed(t.seed, 0, 1));

    let mut workers = (0..cfg.num_envs)
        .map(|e| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(t.seed, 1, e as u64));
            let mut env = FingerEnv::new(t.env.clone(), t.nominal.clone(), spec.clone(), t.rates)?;
            env.reset(&mut rng)?;
            Ok(Worker {
                env,
                rng,
                input: Vec::new(),
                mean_cache: DenseCache::default(),
                value_cache: DenseCache::default(),
                episode_return: 0.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let snapshot = |policy: &Policy, update: usize, eval_return: f64| PolicySnapshot {
        policy: policy.clone(),
        env: t.env.clone(),
        meta: SnapshotMeta {
            source: t.source.name().to_string(),
            update,
            eval_return,
            seed: t.seed,
        },
    };

    let mut stats: Vec<UpdateStats> = Vec::with_capacity(cfg.total_updates);
    let mut checkpoints = Vec::new();
    let mut best: Option<PolicySnapshot> = None;
    let std = policy.std();
    for update in 0..cfg.total_updates {
        // Roll-out: samples indexed [t][env].
        let mut steps: Vec<Vec<StepSample>> = Vec::with_capacity(cfg.horizon);
        for _ in 0..cfg.horizon {
            let pol = &policy;
            let row: Vec<Result<StepSample>> = workers
                .par_iter_mut()
                .map(|w| {
                    w.env.policy_input(&mut w.input);
                    let mean = pol.mean(&w.input, &mut w.mean_cache);
                    let value = pol.value(&w.input, &mut w.value_cache);
                    let noise: f64 = StandardNormal.sample(&mut w.rng);
                    let action = mean + std * noise;
                    let log_prob = pol.log_prob(action, mean);
                    let obs = w.input.clone();
                    let info = w.env.step(action)?;
                    w.episode_return += info.reward.total;
                    let (mut final_value, mut finished_return) = (0.0, None);
                    if info.done {
                        w.env.policy_input(&mut w.input);
                        final_value = pol.value(&w.input, &mut w.value_cache);
                        finished_return = Some(w.episode_return);
                        w.episode_return = 0.0;
                        w.env.reset(&mut w.rng)?;
                    }
                    Ok(StepSample {
                        obs,
                        action,
                        log_prob,
                        value,
                        reward: info.reward.total,
                        done: info.done,
                        final_value,
                        finished_return,
                    })
                })
                .collect();
            steps.push(row.into_iter().collect::<Result<Vec<_>>>()?);
        }
        let last_values: Vec<f64> = workers
            .par_iter_mut()
            .map(|w| {
                w.env.policy_input(&mut w.input);
                policy.value(&w.input, &mut w.value_cache)
            })
            .collect();

        let mut buf = RolloutBuffer::default();
        let mut reward_sum = 0.0;
        let mut finished = Vec::new();
        let horizon = cfg.horizon;
        let mut per_env_adv = Vec::with_capacity(cfg.num_envs);
        for e in 0..cfg.num_envs {
            let rewards: Vec<f64> = (0..horizon).map(|t| steps[t][e].reward).collect();
            let values: Vec<f64> = (0..horizon).map(|t| steps[t][e].value).collect();
            let ends: Vec<bool> = (0..horizon).map(|t| steps[t][e].done).collect();
            let next: Vec<f64> = (0..horizon)
                .map(|t| {
                    if steps[t][e].done {
                        steps[t][e].final_value
                    } else if t + 1 < horizon {
                        steps[t + 1][e].value
                    } else {
                        last_values[e]
                    }
                })
                .collect();
            let terminal = vec![false; horizon];
            let adv = gae(&rewards, &values, &next, &terminal, &ends, cfg.gamma, cfg.gae_lambda);
            per_env_adv.push((adv, values));
        }
        for (t, row) in steps.into_iter().enumerate() {
            for (e, s) in row.into_iter().enumerate() {
                let (adv, values) = &per_env_adv[e];
                reward_sum += s.reward;
                if let Some(r) = s.finished_return {
                    finished.push(r);
                }
                buf.obs.push(s.obs);
                buf.actions.push(s.action);
                buf.log_probs.push(s.log_prob);
                buf.advantages.push(adv[t]);
                buf.returns.push(adv[t] + values[t]);
            }
        }

        let losses = ppo_update(&mut policy, &mut learner, &buf, cfg, &mut update_rng);
        let mut st = UpdateStats {
            update,
            mean_step_reward: reward_sum / buf.len() as f64,
            episode_return: if finished.is_empty() {
                f64::NAN
            } else {
                finished.iter().sum::<f64>() / finished.len() as f64
            },
            policy_loss: losses.policy_loss,
            value_loss: losses.value_loss,
            approx_kl: losses.approx_kl,
            clip_fraction: losses.clip_fraction,
            eval_return: None,
        };
        let diverged = !losses.value_loss.is_finite() || losses.value_loss > cfg.divergence_value_loss;
        if diverged || !losses.policy_loss.is_finite() {
            stats.push(st);
            return Err(RlError::Diverged {
                update,
                reason: format!("value loss {:.3e}, policy loss {:.3e}", losses.value_loss, losses.policy_loss),
                trace: stats,
            });
        }
        if (update + 1) % cfg.eval_every == 0 || update + 1 == cfg.total_updates {
            let r = evaluate_policy(&policy, &t.env, &t.nominal, &spec, t.rates, &cfg.eval_alphas)?;
            st.eval_return = Some(r);
            let snap = snapshot(&policy, update + 1, r);
            if best.as_ref().is_none_or(|b| r > b.meta.eval_return) {
                best = Some(snap.clone());
            }
            checkpoints.push(snap);
        }
        if let Some(cb) = t.on_update.as_mut() {
            cb(&st);
        }
        stats.push(st);
    }
    Ok(PolicyTrainOutcome {
        best: best.expect("final update is always evaluated"),
        checkpoints,
        stats,
    })
}
