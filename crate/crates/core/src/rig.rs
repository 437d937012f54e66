//! The surrogate "real" test bench: servo and plant stepped together.

use crate::config::{PlantConfig, ServoConfig, SimRates};
use crate::error::Result;
use crate::plant::{Obstacle, Plant};
use crate::servo::{servo_step, ServoOutput, ServoState};

/// Readings from one servo tick. `force` is the tension held over the tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickReading {
    pub t: f64,
    pub theta_d: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub force: f64,
}

#[derive(Debug, Clone)]
pub struct SurrogateRig {
    pub plant: Plant,
    pub servo_config: ServoConfig,
    pub servo: ServoState,
    pub rates: SimRates,
}

impl SurrogateRig {
    pub fn new(plant: PlantConfig, servo_config: ServoConfig, rates: SimRates, seed: u64) -> Self {
        let plant = Plant::new(plant);
        let (theta0, _) = plant.motor_angle();
        let servo = ServoState::new(&servo_config, theta0, theta0, seed);
        Self {
            plant,
            servo_config,
            servo,
            rates,
        }
    }

    /// One servo tick followed by the plant substeps it spans.
    pub fn tick(&mut self, theta_d: f64, obstacles: &[Obstacle]) -> Result<TickReading> {
        let t = self.plant.state.t;
        let ServoOutput {
            force,
            theta_meas,
            theta_dot_meas,
        } = servo_step(
            &mut self.servo,
            &self.servo_config,
            theta_d,
            &self.plant.state,
            &self.plant.config,
            obstacles,
            self.rates.dt_data(),
        )?;
        let dt = self.rates.dt_sim();
        for _ in 0..self.rates.substeps_per_data_tick() {
            self.plant.step(force, obstacles, dt)?;
        }
        Ok(TickReading {
            t,
            theta_d,
            theta: theta_meas,
            theta_dot: theta_dot_meas,
            force,
        })
    }
}
