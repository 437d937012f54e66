//! Fingertip-reaching environment: the policy adjusts the motor command
//! relative to the current motor angle; the goal is a point on the finger arc.

use std::collections::VecDeque;
use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};
use tendonsim_core::config::{FingerConfig, PlantConfig, SimRates};
use tendonsim_core::plant::fingertip_position;
use tendonsim_simforce::{ForceSim, SourceSpec};

use crate::domain::{sample_domain_params, DomainParams};
use crate::error::{Result, RlError};

/// Values per observation: θ, θ̇, a_t, a_{t−1}, α.
pub const OBS_DIM: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub episode_seconds: f64,
    /// |Δθ| bound per control step, rad.
    pub action_limit: f64,
    /// Weight on −‖p_goal − p_tip‖, per meter.
    pub w_goal: f64,
    /// Weight on −|a_t − a_{t−1}|, per rad.
    pub w_smooth: f64,
    /// Observations in the policy input.
    pub history: usize,
    pub randomize: bool,
    /// Half-width of the multiplier range around 1.
    pub randomize_spread: f64,
    /// Multiplied into each observation channel before the network.
    pub obs_scale: [f64; OBS_DIM],
    pub max_force: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            episode_seconds: 10.0,
            action_limit: 0.5,
            w_goal: 10.0,
            w_smooth: 1.0,
            history: 30,
            randomize: true,
            randomize_spread: 0.3,
            obs_scale: [0.5, 0.1, 2.0, 2.0, 1.0],
            max_force: 21.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("episode_seconds", self.episode_seconds),
            ("action_limit", self.action_limit),
            ("max_force", self.max_force),
            ("history", self.history as f64),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RlError::invalid(field, format!("must be positive, got {v}")));
            }
        }
        if !(self.w_goal >= 0.0 && self.w_smooth >= 0.0) {
            return Err(RlError::invalid("w_goal/w_smooth", "weights must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.randomize_spread) {
            return Err(RlError::invalid("randomize_spread", "must be in [0, 1)"));
        }
        Ok(())
    }

    pub fn steps_per_episode(&self, rates: SimRates) -> usize {
        (self.episode_seconds * rates.control_hz as f64).round() as usize
    }
}

/// Goal tip position for arc angle α: both coupled joints at α.
pub fn goal_position(alpha: f64, config: &FingerConfig) -> (f64, f64) {
    fingertip_position([alpha, alpha], config)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reward {
    /// −‖p_goal − p_tip‖, m.
    pub goal: f64,
    /// −|a_t − a_{t−1}|, rad.
    pub smooth: f64,
    pub total: f64,
}

pub fn compute_reward(tip: (f64, f64), goal: (f64, f64), a_t: f64, a_prev: f64, w_goal: f64, w_smooth: f64) -> Reward {
    let goal_term = -((goal.0 - tip.0).powi(2) + (goal.1 - tip.1).powi(2)).sqrt();
    let smooth = -(a_t - a_prev).abs();
    Reward {
        goal: goal_term,
        smooth,
        total: w_goal * goal_term + w_smooth * smooth,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub reward: Reward,
    pub done: bool,
    /// Action actually applied (after clamping).
    pub applied: f64,
    pub theta_d: f64,
    pub tip: (f64, f64),
    pub goal: (f64, f64),
    pub force: f64,
}

pub struct FingerEnv {
    pub config: EnvConfig,
    pub nominal: FingerConfig,
    pub source: SourceSpec,
    pub rates: SimRates,
    pub sim: ForceSim,
    pub alpha: f64,
    pub domain: DomainParams,
    /// Goal from the nominal geometry, so it does not move with randomization.
    goal: (f64, f64),
    a_t: f64,
    a_prev: f64,
    steps: usize,
    history: VecDeque<[f64; OBS_DIM]>,
}

impl FingerEnv {
    pub fn new(config: EnvConfig, nominal: FingerConfig, source: SourceSpec, rates: SimRates) -> Result<Self> {
        config.validate()?;
        let sim = ForceSim::new(PlantConfig::Finger(nominal.clone()), &source, rates, config.max_force)?;
        let mut env = Self {
            goal: goal_position(0.0, &nominal),
            config,
            nominal,
            source,
            rates,
            sim,
            alpha: 0.0,
            domain: DomainParams::NOMINAL,
            a_t: 0.0,
            a_prev: 0.0,
            steps: 0,
            history: VecDeque::new(),
        };
        env.reset_with(0.0, DomainParams::NOMINAL)?;
        Ok(env)
    }

    /// Random α on [0, π/2] and (when enabled) random domain parameters.
    pub fn reset<R: Rng>(&mut self, rng: &mut R) -> Result<()> {
        let alpha = rng.random_range(0.0..=FRAC_PI_2);
        let domain = sample_domain_params(rng, self.config.randomize, self.config.randomize_spread);
        self.reset_with(alpha, domain)
    }

    pub fn reset_with(&mut self, alpha: f64, domain: DomainParams) -> Result<()> {
        let plant = PlantConfig::Finger(domain.apply(&self.nominal));
        self.sim = ForceSim::new(plant, &self.source, self.rates, self.config.max_force)?;
        self.alpha = alpha;
        self.domain = domain;
        self.goal = goal_position(alpha, &self.nominal);
        self.a_t = 0.0;
        self.a_prev = 0.0;
        self.steps = 0;
        let obs = self.observation();
        self.history = std::iter::repeat_n(obs, self.config.history).collect();
        Ok(())
    }

    /// Changes the goal mid-episode (deployment schedules).
    pub fn set_alpha(&mut self, alpha: f64) {
        self.alpha = alpha;
        self.goal = goal_position(alpha, &self.nominal);
        if let Some(last) = self.history.back_mut() {
            last[4] = alpha;
        }
    }

    pub fn goal(&self) -> (f64, f64) {
        self.goal
    }

    fn observation(&self) -> [f64; OBS_DIM] {
        let (theta, theta_dot) = self.sim.observe();
        [theta, theta_dot, self.a_t, self.a_prev, self.alpha]
    }

    /// Policy input: the last `history` observations, oldest first, scaled.
    pub fn policy_input(&self, out: &mut Vec<f32>) {
        out.clear();
        for obs in &self.history {
            for (v, s) in obs.iter().zip(&self.config.obs_scale) {
                out.push((v * s) as f32);
            }
        }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&mut self, action: f64) -> Result<StepInfo> {
        if !action.is_finite() {
            return Err(RlError::NonFiniteAction(action));
        }
        let limit = self.config.action_limit;
        let applied = action.clamp(-limit, limit);
        let (theta, _) = self.sim.observe();
        let theta_d = theta + applied;
        let rec = self.sim.control_step(theta_d)?;
        self.a_prev = self.a_t;
        self.a_t = applied;
        self.steps += 1;
        let tip = self.sim.plant.tip();
        let reward = compute_reward(tip, self.goal, self.a_t, self.a_prev, self.config.w_goal, self.config.w_smooth);
        let obs = self.observation();
        self.history.pop_front();
        self.history.push_back(obs);
        Ok(StepInfo {
            reward,
            done: self.steps >= self.config.steps_per_episode(self.rates),
            applied,
            theta_d,
            tip,
            goal: self.goal,
            force: rec.force,
        })
    }
}
