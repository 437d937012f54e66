//! Surrogate position-controlled servo: the ground truth every estimator learns.
//!
//! One call to [`servo_step`] is one 80 Hz controller tick. The command passes
//! through a latency queue, the PID acts on the quantized encoder reading (spool
//! angle seen through the backlash deadband), and motor friction with a Stribeck
//! peak is removed from the PID output. Near zero speed the motor can stick: the
//! net tendon force then holds the load still until the PID demand exceeds the
//! breakaway level.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{PlantConfig, ServoConfig};
use crate::error::{CoreError, Result};
use crate::plant::{static_tendon_load, tendon_inertia, Obstacle, PlantState};

/// Ideal-source gain reported for the physical reference servo, N/rad.
pub const HARDWARE_IDEAL_GAIN: f64 = 4.2;

#[derive(Debug, Clone)]
pub struct ServoState {
    pub integrator: f64,
    pub command_queue: VecDeque<f64>,
    pub spool_angle: f64,
    pub stick_mode: bool,
    pub last_output_force: f64,
    last_velocity: f64,
    rng: ChaCha8Rng,
}

impl ServoState {
    /// Fresh servo with the command queue pre-filled by `initial_command`.
    pub fn new(config: &ServoConfig, initial_command: f64, initial_angle: f64, seed: u64) -> Self {
        Self {
            integrator: 0.0,
            command_queue: std::iter::repeat_n(initial_command, config.latency_steps + 1).collect(),
            spool_angle: initial_angle,
            stick_mode: false,
            last_output_force: 0.0,
            last_velocity: 0.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoOutput {
    /// Net force delivered to the tendon, N, within [0, max_force].
    pub force: f64,
    pub theta_meas: f64,
    pub theta_dot_meas: f64,
}

/// Motor friction opposing `velocity`; Coulomb + Stribeck peak + viscous.
pub fn friction_force(velocity: f64, config: &ServoConfig) -> f64 {
    let speed = velocity.abs();
    let ratio = speed / config.stribeck_velocity;
    let magnitude = config.coulomb_friction
        + config.stiction_extra * (-ratio * ratio).exp()
        + config.viscous_friction * speed;
    if velocity > 0.0 {
        magnitude
    } else if velocity < 0.0 {
        -magnitude
    } else {
        0.0
    }
}

/// Ideal force source, P·(θ_d − θ), clamped at zero since a tendon cannot push.
pub fn ideal_force(theta_d: f64, theta: f64, gain: f64) -> f64 {
    ideal_force_unclamped(theta_d, theta, gain).max(0.0)
}

pub fn ideal_force_unclamped(theta_d: f64, theta: f64, gain: f64) -> f64 {
    gain * (theta_d - theta)
}

fn quantize(angle: f64, step: f64) -> f64 {
    if step > 0.0 {
        (angle / step).round() * step
    } else {
        angle
    }
}

/// One controller tick. Returns the net tendon force to hold over the next
/// `dt` of plant integration, together with the encoder readings the PID used.
pub fn servo_step(
    state: &mut ServoState,
    config: &ServoConfig,
    theta_d: f64,
    plant: &PlantState,
    plant_config: &PlantConfig,
    obstacles: &[Obstacle],
    dt: f64,
) -> Result<ServoOutput> {
    if !theta_d.is_finite() {
        return Err(CoreError::NonFiniteServoInput("theta_d"));
    }
    if !plant.is_finite() {
        return Err(CoreError::NonFiniteServoInput("plant state"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CoreError::NonFiniteServoInput("dt"));
    }

    // Queue keeps the last latency_steps + 1 commands; the oldest one is applied.
    state.command_queue.push_back(theta_d);
    state.command_queue.pop_front();
    let command = *state
        .command_queue
        .front()
        .expect("queue holds latency_steps + 1 commands");

    let r = plant_config.spool_radius();
    let tendon_angle = plant.tendon_length / r;
    let motor_velocity = plant.tendon_velocity / r;

    let half_gap = config.backlash / 2.0;
    let previous_spool = state.spool_angle;
    state.spool_angle = previous_spool.clamp(tendon_angle - half_gap, tendon_angle + half_gap);
    let engaged = config.backlash == 0.0 || state.spool_angle != previous_spool;
    let theta_meas = quantize(state.spool_angle, config.encoder_quantization);
    let mut theta_dot_meas = if engaged { motor_velocity } else { 0.0 };
    if config.encoder_velocity_noise_std > 0.0 {
        let noise = Normal::new(0.0, config.encoder_velocity_noise_std)
            .expect("validated std")
            .sample(&mut state.rng);
        theta_dot_meas += noise;
    }

    let error = command - theta_meas;
    let raw = config.kp * error + config.ki * state.integrator - config.kd * theta_dot_meas;

    let breakaway = config.breakaway();
    let reversed = motor_velocity * state.last_velocity < 0.0;
    let slow = motor_velocity.abs() < config.stick_velocity || reversed;
    let net = if breakaway > 0.0 && (state.stick_mode || slow) {
        let hold = static_tendon_load(plant, plant_config, obstacles);
        let demand = raw - hold;
        if demand.abs() <= breakaway {
            state.stick_mode = true;
            // Hold the load and cancel residual tendon speed within one tick.
            let arrest = tendon_inertia(plant, plant_config) * plant.tendon_velocity / dt;
            (hold - arrest).clamp(hold - breakaway, hold + breakaway)
        } else {
            state.stick_mode = false;
            raw - demand.signum() * breakaway
        }
    } else {
        state.stick_mode = false;
        raw - friction_force(motor_velocity, config)
    };
    let force = net.clamp(0.0, config.max_force) + 0.0;

    // Conditional integration: no accumulation while pushing further into saturation.
    let saturated_high = raw >= config.max_force && error > 0.0;
    let saturated_low = raw <= 0.0 && error < 0.0;
    if config.ki > 0.0 && !saturated_high && !saturated_low {
        let limit = config.max_force / config.ki;
        state.integrator = (state.integrator + error * dt).clamp(-limit, limit);
    }

    state.last_velocity = motor_velocity;
    state.last_output_force = force;
    Ok(ServoOutput {
        force,
        theta_meas,
        theta_dot_meas,
    })
}

/// Least-squares fit of the ideal-source gain P on (θ_d − θ, F) pairs, constrained
/// through the origin: P = Σ e·F / Σ e².
pub fn fit_ideal_gain(samples: impl IntoIterator<Item = (f64, f64, f64)>) -> Option<f64> {
    let (num, den) = samples
        .into_iter()
        .fold((0.0, 0.0), |(num, den), (theta_d, theta, force)| {
            let e = theta_d - theta;
            (num + e * force, den + e * e)
        });
    (den > 0.0).then(|| num / den)
}

/// Fits P for the clamped ideal source, `clamp(P·(θ_d − θ), 0, max_force)`, by
/// minimizing squared force error. Saturated and slack samples would drag an
/// unclamped fit toward zero, so the clamp is part of the model being fitted.
pub fn fit_ideal_gain_clamped(samples: &[(f64, f64, f64)], max_force: f64) -> Option<f64> {
    if samples.is_empty() || !(max_force > 0.0) {
        return None;
    }
    let cost = |p: f64| -> f64 {
        samples
            .iter()
            .map(|&(theta_d, theta, force)| {
                let f = ideal_force(theta_d, theta, p).min(max_force);
                (f - force).powi(2)
            })
            .sum()
    };
    // Coarse scan, then golden-section refinement around the best cell.
    let upper = 200.0;
    let cells = 400;
    let step = upper / cells as f64;
    let best = (0..=cells)
        .map(|i| i as f64 * step)
        .map(|p| (p, cost(p)))
        .fold((0.0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let (mut lo, mut hi) = ((best.0 - step).max(0.0), best.0 + step);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..60 {
        let a = hi - ratio * (hi - lo);
        let b = lo + ratio * (hi - lo);
        if cost(a) <= cost(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let p = 0.5 * (lo + hi);
    (p > 0.0).then_some(p)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::E;

    use super::*;
    use crate::config::{FingerConfig, SpringMassConfig};
    use crate::plant::{step_plant, Plant};

    fn strong_spring() -> PlantConfig {
        PlantConfig::SpringMass(SpringMassConfig::with_stiffness_scale(2.0))
    }

    #[test]
    fn friction_curve_points() {
        let cfg = ServoConfig::default();
        let tiny = 1e-12;
        assert!((friction_force(tiny, &cfg) - 4.0).abs() < 1e-9);
        let v = 50.0;
        let asymptote = cfg.coulomb_friction + cfg.viscous_friction * v;
        assert!((friction_force(v, &cfg) - asymptote).abs() < 1e-9);
        let at_stribeck = 1.5 + 2.5 / E + 0.4 * 0.1;
        assert!((friction_force(0.1, &cfg) - at_stribeck).abs() < 1e-12);
        assert!((friction_force(-0.1, &cfg) + at_stribeck).abs() < 1e-12);
    }

    #[test]
    fn ideal_force_points() {
        assert!((ideal_force(1.0, 0.0, 4.2) - 4.2).abs() < 1e-15);
        assert_eq!(ideal_force(0.7, 0.7, 4.2), 0.0);
        assert_eq!(ideal_force(0.0, 0.5, 4.2), 0.0);
        assert_eq!(ideal_force_unclamped(0.0, 0.5, 4.2), -2.1);
    }

    #[test]
    fn zero_error_gives_zero_force() {
        let cfg = ServoConfig {
            encoder_velocity_noise_std: 0.0,
            ..ServoConfig::default()
        };
        let plant = Plant::new(strong_spring());
        let mut s = ServoState::new(&cfg, 0.0, 0.0, 1);
        let out = servo_step(&mut s, &cfg, 0.0, &plant.state, &plant.config, &[], 1.0 / 80.0).unwrap();
        assert_eq!(out.force, 0.0);
    }

    #[test]
    fn proportional_saturation() {
        let cfg = ServoConfig::linear(30.0, 21.0);
        let plant = Plant::new(strong_spring());
        let mut s = ServoState::new(&cfg, 0.0, 0.0, 1);
        let out = servo_step(&mut s, &cfg, 1.0, &plant.state, &plant.config, &[], 1.0 / 80.0).unwrap();
        assert_eq!(out.force, 21.0);
        let out = servo_step(&mut s, &cfg, 0.5, &plant.state, &plant.config, &[], 1.0 / 80.0).unwrap();
        assert_eq!(out.force, 15.0);
    }

    #[test]
    fn non_finite_command_is_rejected() {
        let cfg = ServoConfig::default();
        let plant = Plant::new(strong_spring());
        let mut s = ServoState::new(&cfg, 0.0, 0.0, 1);
        assert!(servo_step(&mut s, &cfg, f64::NAN, &plant.state, &plant.config, &[], 0.0125).is_err());
    }

    #[test]
    fn queue_length_matches_latency() {
        let cfg = ServoConfig::default();
        let s = ServoState::new(&cfg, 0.0, 0.0, 3);
        assert_eq!(s.command_queue.len(), cfg.latency_steps + 1);
    }

    #[test]
    fn backlash_hides_small_reversals() {
        let cfg = ServoConfig {
            encoder_quantization: 0.0,
            encoder_velocity_noise_std: 0.0,
            ..ServoConfig::default()
        };
        let pc = PlantConfig::Finger(FingerConfig::default());
        let mut plant = Plant::new(pc.clone());
        let mut s = ServoState::new(&cfg, 0.0, 0.0, 3);
        plant.state.tendon_length = 0.5 * pc.spool_radius();
        servo_step(&mut s, &cfg, 0.0, &plant.state, &pc, &[], 0.0125).unwrap();
        assert!((s.spool_angle - 0.475).abs() < 1e-12);
        plant.state.tendon_length = 0.46 * pc.spool_radius();
        let out = servo_step(&mut s, &cfg, 0.0, &plant.state, &pc, &[], 0.0125).unwrap();
        assert!((out.theta_meas - 0.475).abs() < 1e-12);
    }

    #[test]
    fn ideal_gain_fit_recovers_linear_law() {
        let samples = (0..50).map(|i| {
            let e = i as f64 * 0.02 - 0.3;
            (e + 1.0, 1.0, 7.5 * e)
        });
        assert!((fit_ideal_gain(samples).unwrap() - 7.5).abs() < 1e-12);
        assert!(fit_ideal_gain(std::iter::empty()).is_none());
    }

    #[test]
    fn clamped_fit_ignores_saturation() {
        let mut samples = Vec::new();
        for i in 0..200 {
            let e = i as f64 * 0.02 - 1.0;
            let f = (12.0 * e).clamp(0.0, 21.0);
            samples.push((e, 0.0, f));
        }
        let p = fit_ideal_gain_clamped(&samples, 21.0).unwrap();
        assert!((p - 12.0).abs() < 1e-6, "{p}");
        let plain = fit_ideal_gain(samples.iter().copied()).unwrap();
        assert!(plain < 11.0);
    }

    #[test]
    fn closed_loop_step_settles() {
        let cfg = ServoConfig::default();
        let pc = strong_spring();
        let mut plant = Plant::new(pc.clone());
        let mut s = ServoState::new(&cfg, 0.0, 0.0, 9);
        for _ in 0..(80 * 6) {
            let out = servo_step(&mut s, &cfg, 2.0, &plant.state, &pc, &[], 0.0125).unwrap();
            for _ in 0..5 {
                plant.state = step_plant(&plant.state, &pc, out.force, &[], 0.0025).unwrap();
            }
        }
        let (theta, _) = plant.motor_angle();
        // P-only balance kp·(2 − θ) = k·r·θ, give or take the stiction band.
        let spring_gain = 300.0 * pc.spool_radius();
        let balance = cfg.kp * 2.0 / (cfg.kp + spring_gain);
        let band = cfg.breakaway() / (cfg.kp + spring_gain) + 0.01;
        assert!((theta - balance).abs() < band, "theta {theta}");
        // Spring force at 2 rad on the 300 N/m spring.
        let spring = 300.0 * plant.state.tendon_length;
        assert!((plant.state.tendon_tension - spring).abs() < cfg.breakaway() + 0.5);
    }
}
