//! Shared settings of the experiments.

use serde::{Deserialize, Serialize};
use tendonsim_core::config::{FingerConfig, PlantConfig, ServoConfig, SimRates, SystemsConfig, FINGER_ID};
use tendonsim_core::datagen::{LoadCellConfig, SystemSpec};
use tendonsim_core::trajectory::Trajectory;

use crate::error::{EvalError, Result};

/// Command sinusoid `offset + amplitude·sin(omega·t)` over `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineSpec {
    pub offset: f64,
    pub amplitude: f64,
    pub omega: f64,
    pub duration: f64,
}

impl SineSpec {
    pub fn trajectory(&self) -> Trajectory {
        Trajectory::Sine {
            offset: self.offset,
            amplitude: self.amplitude,
            omega: self.omega,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSetup {
    pub rates: SimRates,
    /// The surrogate servo treated as the real system.
    pub servo: ServoConfig,
    pub systems: SystemsConfig,
    pub load_cell: LoadCellConfig,
    /// Gain of the ideal baseline, N/rad.
    pub ideal_gain: f64,
    pub seed: u64,
    pub step_targets: Vec<f64>,
    pub step_holds: Vec<f64>,
    /// Peak motor command of the contact ramps, rad.
    pub ramp_peak: f64,
    pub ramp_slope: f64,
    pub ramp_cycles: usize,
    /// Stop angle of the half-way blocking condition, rad.
    pub half_block_angle: f64,
    pub perturbed_sine: SineSpec,
    pub gap_sine: SineSpec,
    /// Largest lag searched by the cross-correlation, s.
    pub max_lag_s: f64,
}

impl Default for EvalSetup {
    fn default() -> Self {
        Self {
            rates: SimRates::default(),
            servo: ServoConfig::default(),
            systems: SystemsConfig::default(),
            load_cell: LoadCellConfig::default(),
            ideal_gain: 30.0,
            seed: 0,
            step_targets: vec![0.0, 2.0, 4.0, 1.0],
            step_holds: vec![1.0, 2.0, 3.0],
            ramp_peak: 4.0,
            ramp_slope: 1.5,
            ramp_cycles: 2,
            half_block_angle: std::f64::consts::FRAC_PI_4,
            perturbed_sine: SineSpec {
                offset: std::f64::consts::FRAC_PI_2,
                amplitude: std::f64::consts::FRAC_PI_2,
                omega: 1.5 * std::f64::consts::PI,
                duration: 30.0,
            },
            gap_sine: SineSpec {
                offset: 1.0,
                amplitude: 1.0,
                omega: std::f64::consts::PI,
                duration: 20.0,
            },
            max_lag_s: 0.5,
        }
    }
}

impl EvalSetup {
    pub fn max_force(&self) -> f64 {
        self.servo.max_force
    }

    pub fn system(&self, id: &str) -> Result<SystemSpec> {
        let plant = self
            .systems
            .plant(id)
            .ok_or_else(|| EvalError::InvalidInput(format!("unknown system `{id}`")))?;
        Ok(SystemSpec {
            id: id.to_string(),
            plant,
            servo: self.servo.clone(),
            share: 1.0,
        })
    }

    pub fn finger(&self) -> FingerConfig {
        match self.systems.plant(FINGER_ID) {
            Some(PlantConfig::Finger(f)) => f,
            _ => unreachable!("the finger system is always a finger"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rates.validate("eval.rates")?;
        self.servo.validate("eval.servo")?;
        let bad = |what: &str| Err(EvalError::InvalidInput(what.to_string()));
        if !(self.ideal_gain > 0.0 && self.ideal_gain.is_finite()) {
            return bad("ideal_gain must be positive");
        }
        if self.step_targets.is_empty() || self.step_holds.iter().any(|h| !(*h > 0.0)) || self.step_holds.is_empty() {
            return bad("step suite needs targets and positive holds");
        }
        if !(self.ramp_peak > 0.0 && self.ramp_slope > 0.0 && self.ramp_cycles > 0) {
            return bad("ramp peak, slope, and cycles must be positive");
        }
        for s in [&self.perturbed_sine, &self.gap_sine] {
            if !(s.duration > 0.0 && s.omega.is_finite() && s.amplitude.is_finite()) {
                return bad("sinusoid durations must be positive");
            }
        }
        Ok(())
    }
}
