//! Closed-loop deployment of a trained policy against the surrogate system.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use tendonsim_core::config::{FingerConfig, ServoConfig, SimRates};
use tendonsim_simforce::SourceSpec;

use crate::domain::DomainParams;
use crate::env::{EnvConfig, FingerEnv};
use crate::error::{Result, RlError};
use crate::net::DenseCache;
use crate::policy::PolicySnapshot;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Up,
    Down,
}

/// Piecewise-constant goal angles with a common dwell.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSchedule {
    pub levels: Vec<(f64, Phase)>,
    pub dwell_s: f64,
}

impl AlphaSchedule {
    /// 0 to π/2 in π/10 increments, then back to 0.
    pub fn stairs(dwell_s: f64) -> Self {
        let up = (0..=5).map(|k| (k as f64 * PI / 10.0, Phase::Up));
        let down = (0..5).rev().map(|k| (k as f64 * PI / 10.0, Phase::Down));
        Self {
            levels: up.chain(down).collect(),
            dwell_s,
        }
    }

    pub fn dwell_steps(&self, rates: SimRates) -> usize {
        (self.dwell_s * rates.control_hz as f64).round() as usize
    }

    pub fn total_steps(&self, rates: SimRates) -> usize {
        self.levels.len() * self.dwell_steps(rates)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeployRow {
    pub t: f64,
    pub alpha: f64,
    pub phase: Phase,
    /// Control steps since the last goal change.
    pub since_change: usize,
    pub action: f64,
    pub theta_d: f64,
    pub theta: f64,
    pub force: f64,
    pub tip_x: f64,
    pub tip_y: f64,
    pub goal_x: f64,
    pub goal_y: f64,
    /// ‖p_goal − p_tip‖, m.
    pub error: f64,
}

#[derive(Debug, Clone)]
pub struct DeployConfig {
    pub schedule: AlphaSchedule,
    pub servo: ServoConfig,
    pub servo_seed: u64,
    pub rates: SimRates,
}

impl Default for DeployConfig {
    fn default() -> Self {
        Self {
            schedule: AlphaSchedule::stairs(3.0),
            servo: ServoConfig::default(),
            servo_seed: 0,
            rates: SimRates::default(),
        }
    }
}

/// Runs the snapshot's mean action against the nominal finger driven by the
/// surrogate servo.
pub fn deploy_policy(snapshot: &PolicySnapshot, nominal: &FingerConfig, cfg: &DeployConfig) -> Result<Vec<DeployRow>> {
    let schedule = &cfg.schedule;
    if schedule.levels.is_empty() || schedule.dwell_steps(cfg.rates) == 0 {
        return Err(RlError::invalid("schedule", "needs at least one level and one step of dwell"));
    }
    let env_cfg = EnvConfig {
        randomize: false,
        ..snapshot.env.clone()
    };
    let source = SourceSpec::Surrogate {
        servo: cfg.servo.clone(),
        seed: cfg.servo_seed,
    };
    let mut env = FingerEnv::new(env_cfg, nominal.clone(), source, cfg.rates)?;
    env.reset_with(schedule.levels[0].0, DomainParams::NOMINAL)?;
    let dwell = schedule.dwell_steps(cfg.rates);
    let dt = cfg.rates.dt_control();
    let mut input = Vec::new();
    let mut cache = DenseCache::default();
    let mut log = Vec::with_capacity(schedule.total_steps(cfg.rates));
    for &(alpha, phase) in &schedule.levels {
        env.set_alpha(alpha);
        for since_change in 0..dwell {
            env.policy_input(&mut input);
            let action = snapshot.policy.mean(&input, &mut cache);
            let info = env.step(action)?;
            let (theta, _) = env.sim.observe();
            log.push(DeployRow {
                t: (log.len() + 1) as f64 * dt,
                alpha,
                phase,
                since_change,
                action: info.applied,
                theta_d: info.theta_d,
                theta,
                force: info.force,
                tip_x: info.tip.0,
                tip_y: info.tip.1,
                goal_x: info.goal.0,
                goal_y: info.goal.1,
                error: -info.reward.goal,
            });
        }
    }
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeployMetrics {
    /// Tip error RMSE over the whole schedule, m.
    pub rmse: f64,
    pub rmse_up: f64,
    pub rmse_down: f64,
    /// Largest tip error during the opening (down) phase once each step's
    /// initial transient has passed, m.
    pub opening_max_error: f64,
}

fn rmse<'a>(errors: impl Iterator<Item = &'a f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for e in errors {
        sum += e * e;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        (sum / n as f64).sqrt()
    }
}

/// `transient_skip_s` excludes the start of each down step from the opening
/// maximum, so the unavoidable jump at a goal change does not dominate it.
pub fn deploy_metrics(log: &[DeployRow], rates: SimRates, transient_skip_s: f64) -> DeployMetrics {
    let skip = (transient_skip_s * rates.control_hz as f64).round() as usize;
    let errs = |phase: Option<Phase>| {
        log.iter()
            .filter(move |r| phase.is_none_or(|p| r.phase == p))
            .map(|r| &r.error)
    };
    let opening_max_error = log
        .iter()
        .filter(|r| r.phase == Phase::Down && r.since_change >= skip)
        .map(|r| r.error)
        .fold(0.0, f64::max);
    DeployMetrics {
        rmse: rmse(errs(None)),
        rmse_up: rmse(errs(Some(Phase::Up))),
        rmse_down: rmse(errs(Some(Phase::Down))),
        opening_max_error,
    }
}
