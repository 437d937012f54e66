//! Force-driven simulation. A [`ForceSource`] supplies the tendon force once per
//! control tick; the plant integrates under that force held for every substep.

use std::collections::VecDeque;
use std::sync::Arc;

use tendonsim_core::config::{PlantConfig, ServoConfig, SimRates};
use tendonsim_core::plant::{Obstacle, Plant};
use tendonsim_core::servo::{servo_step, ServoState};
use tendonsim_core::CoreError;
use tendonsim_estimators::{EstimatorModel, InferenceScratch, CHANNELS};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimforceError {
    #[error("{source_kind} force source produced a non-finite force ({value}) at t={t:.3}s")]
    NonFiniteForce {
        source_kind: &'static str,
        value: f64,
        t: f64,
    },

    #[error("invalid simulation setup: {0}")]
    InvalidSetup(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type Result<T> = std::result::Result<T, SimforceError>;

/// How the tendon force is produced.
#[derive(Debug, Clone)]
pub enum SourceSpec {
    /// A trained estimator evaluated on the control-rate history window.
    Learned(Arc<EstimatorModel>),
    /// P·(θ_d − θ).
    Ideal { gain: f64 },
    /// The surrogate servo itself, ticked at its own rate inside each control
    /// period: the stand-in for the physical system, not a simulation model.
    Surrogate { servo: ServoConfig, seed: u64 },
}

impl SourceSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            SourceSpec::Learned(_) => "learned",
            SourceSpec::Ideal { .. } => "ideal",
            SourceSpec::Surrogate { .. } => "surrogate",
        }
    }
}

enum SourceState {
    Learned {
        model: Arc<EstimatorModel>,
        scratch: InferenceScratch,
        flat: Vec<f64>,
    },
    Ideal {
        gain: f64,
    },
    Surrogate {
        config: ServoConfig,
        servo: Box<ServoState>,
    },
}

/// Force source plus its ring of the last H control-rate observations.
pub struct ForceSource {
    spec_name: &'static str,
    state: SourceState,
    ring: VecDeque<[f64; CHANNELS]>,
    history: usize,
}

impl ForceSource {
    /// `initial` = (θ, θ̇) at the start; the ring is filled with it (θ_d = θ).
    pub fn new(spec: &SourceSpec, initial: (f64, f64)) -> Self {
        let spec_name = spec.kind_name();
        let (state, history) = match spec {
            SourceSpec::Learned(model) => (
                SourceState::Learned {
                    model: model.clone(),
                    scratch: InferenceScratch::default(),
                    flat: Vec::new(),
                },
                model.history(),
            ),
            SourceSpec::Ideal { gain } => (SourceState::Ideal { gain: *gain }, tendonsim_estimators::HISTORY),
            SourceSpec::Surrogate { servo, seed } => (
                SourceState::Surrogate {
                    config: servo.clone(),
                    servo: Box::new(ServoState::new(servo, initial.0, initial.0, *seed)),
                },
                tendonsim_estimators::HISTORY,
            ),
        };
        let ring = std::iter::repeat_n([initial.0, initial.0, initial.1], history).collect();
        Self {
            spec_name,
            state,
            ring,
            history,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        self.spec_name
    }

    /// The current window, oldest row first.
    pub fn window(&self) -> impl Iterator<Item = &[f64; CHANNELS]> {
        self.ring.iter()
    }

    pub fn history(&self) -> usize {
        self.history
    }

    fn push(&mut self, obs: [f64; CHANNELS]) {
        if self.ring.len() == self.history {
            self.ring.pop_front();
        }
        self.ring.push_back(obs);
    }
}

/// One control tick's record: observation at tick start and the force applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub t: f64,
    pub theta_d: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub force: f64,
    pub tip: (f64, f64),
}

/// A plant driven at control rate by a force source.
pub struct ForceSim {
    pub plant: Plant,
    pub source: ForceSource,
    pub rates: SimRates,
    pub max_force: f64,
    pub obstacles: Vec<Obstacle>,
}

impl ForceSim {
    pub fn new(plant: PlantConfig, spec: &SourceSpec, rates: SimRates, max_force: f64) -> Result<Self> {
        rates.validate("rates")?;
        plant.validate("plant")?;
        if !(max_force > 0.0 && max_force.is_finite()) {
            return Err(SimforceError::InvalidSetup(format!("max_force must be positive, got {max_force}")));
        }
        if let SourceSpec::Ideal { gain } = spec {
            if !gain.is_finite() {
                return Err(SimforceError::InvalidSetup(format!("ideal gain must be finite, got {gain}")));
            }
        }
        let plant = Plant::new(plant);
        let source = ForceSource::new(spec, plant.motor_angle());
        Ok(Self {
            plant,
            source,
            rates,
            max_force,
            obstacles: Vec::new(),
        })
    }

    /// (θ, θ̇) from the tendon state.
    pub fn observe(&self) -> (f64, f64) {
        self.plant.motor_angle()
    }

    /// Advances one control period under command `theta_d`.
    pub fn control_step(&mut self, theta_d: f64) -> Result<TickRecord> {
        let t = self.plant.state.t;
        let (theta, theta_dot) = self.observe();
        let tip = self.plant.tip();
        self.source.push([theta_d, theta, theta_dot]);
        let force = match &mut self.source.state {
            SourceState::Surrogate { .. } => return self.surrogate_period(theta_d, t, theta, theta_dot, tip),
            SourceState::Ideal { gain } => *gain * (theta_d - theta),
            SourceState::Learned { model, scratch, flat } => {
                flat.clear();
                flat.extend(self.source.ring.iter().flatten());
                model.predict_values(flat, scratch)
            }
        };
        if !force.is_finite() {
            return Err(SimforceError::NonFiniteForce {
                source_kind: self.source.spec_name,
                value: force,
                t,
            });
        }
        let force = force.clamp(0.0, self.max_force) + 0.0;
        let dt = self.rates.dt_sim();
        for _ in 0..self.rates.substeps_per_control_tick() {
            self.plant.step(force, &self.obstacles, dt)?;
        }
        Ok(TickRecord {
            t,
            theta_d,
            theta,
            theta_dot,
            force,
            tip,
        })
    }

    /// Surrogate reference: servo ticks at its own rate with the command held.
    /// The reported force is the mean over the period.
    fn surrogate_period(&mut self, theta_d: f64, t: f64, theta: f64, theta_dot: f64, tip: (f64, f64)) -> Result<TickRecord> {
        let SourceState::Surrogate { config, servo } = &mut self.source.state else {
            unreachable!()
        };
        let dt_data = self.rates.dt_data();
        let dt = self.rates.dt_sim();
        let ticks = self.rates.data_ticks_per_control_tick();
        let mut sum = 0.0;
        for _ in 0..ticks {
            let out = servo_step(servo, config, theta_d, &self.plant.state, &self.plant.config, &self.obstacles, dt_data)?;
            sum += out.force;
            for _ in 0..self.rates.substeps_per_data_tick() {
                self.plant.step(out.force, &self.obstacles, dt)?;
            }
        }
        Ok(TickRecord {
            t,
            theta_d,
            theta,
            theta_dot,
            force: sum / ticks as f64,
            tip,
        })
    }
}

/// Replays one command sequence through each source from identical initial states.
pub fn replay_open_loop(
    plant: &PlantConfig,
    sources: &[SourceSpec],
    commands: &[f64],
    rates: SimRates,
    max_force: f64,
    obstacles: &[Obstacle],
) -> Result<Vec<Vec<TickRecord>>> {
    sources
        .iter()
        .map(|spec| {
            let mut sim = ForceSim::new(plant.clone(), spec, rates, max_force)?;
            sim.obstacles = obstacles.to_vec();
            commands.iter().map(|&c| sim.control_step(c)).collect()
        })
        .collect()
}
