//! Desired-position command families used for data collection.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TrajectoryFamily {
    RandomStep,
    Sinusoid,
    Ramp,
    Stairs,
}

impl TrajectoryFamily {
    pub const ALL: [TrajectoryFamily; 4] = [
        TrajectoryFamily::RandomStep,
        TrajectoryFamily::Sinusoid,
        TrajectoryFamily::Ramp,
        TrajectoryFamily::Stairs,
    ];
}

impl fmt::Display for TrajectoryFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            TrajectoryFamily::RandomStep => "random_step",
            TrajectoryFamily::Sinusoid => "sinusoid",
            TrajectoryFamily::Ramp => "ramp",
            TrajectoryFamily::Stairs => "stairs",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySpec {
    pub family: TrajectoryFamily,
    /// Target range for steps, ramps, and stairs, rad.
    pub position_range: (f64, f64),
    pub amplitude: f64,
    /// Sinusoid center, rad.
    pub offset: f64,
    /// Sinusoid angular frequency range, rad/s.
    pub frequency_range: (f64, f64),
    /// Ramp slope range, rad/s.
    pub slope_range: (f64, f64),
    pub increment: f64,
    /// Hold time on each stair, s.
    pub stair_dwell: f64,
    /// Hold time range for random steps, s.
    pub step_dwell_range: (f64, f64),
    pub duration: f64,
    pub seed: u64,
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self {
            family: TrajectoryFamily::RandomStep,
            position_range: (0.0, TAU),
            amplitude: FRAC_PI_2,
            offset: FRAC_PI_2,
            frequency_range: (PI, 4.0 * PI),
            slope_range: (1.0, 2.0),
            increment: 0.1,
            stair_dwell: 0.5,
            step_dwell_range: (0.5, 3.0),
            duration: 60.0,
            seed: 0,
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if lo.is_finite() && hi.is_finite() && lo <= hi {
        Ok(())
    } else {
        Err(CoreError::invalid(
            format!("trajectory.{name}"),
            format!("bad range ({lo}, {hi})"),
        ))
    }
}

impl TrajectorySpec {
    pub fn new(family: TrajectoryFamily, duration: f64, seed: u64) -> Self {
        Self {
            family,
            duration,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(CoreError::invalid("trajectory.duration", "must be > 0"));
        }
        check_range("position_range", self.position_range)?;
        check_range("frequency_range", self.frequency_range)?;
        check_range("slope_range", self.slope_range)?;
        check_range("step_dwell_range", self.step_dwell_range)?;
        if self.position_range.0 == self.position_range.1 {
            return Err(CoreError::invalid("trajectory.position_range", "degenerate"));
        }
        if self.slope_range.0 <= 0.0 || self.increment <= 0.0 || self.stair_dwell <= 0.0 {
            return Err(CoreError::invalid(
                "trajectory",
                "slope, increment, and dwell must be positive",
            ));
        }
        if self.step_dwell_range.0 <= 0.0 {
            return Err(CoreError::invalid("trajectory.step_dwell_range", "must be positive"));
        }
        Ok(())
    }
}

/// A command signal as a pure function of time.
#[derive(Debug, Clone)]
pub enum Trajectory {
    /// (start time, value) holds, sorted by start time.
    Piecewise(Vec<(f64, f64)>),
    Sine { offset: f64, amplitude: f64, omega: f64 },
    /// (start time, start value, slope) segments.
    Ramps(Vec<(f64, f64, f64)>),
}

impl Trajectory {
    pub fn build(spec: &TrajectorySpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let (lo, hi) = spec.position_range;
        let uniform = |rng: &mut ChaCha8Rng, (a, b): (f64, f64)| {
            if a == b {
                a
            } else {
                rng.random_range(a..b)
            }
        };
        let traj = match spec.family {
            TrajectoryFamily::RandomStep => {
                let mut holds = Vec::new();
                let mut t = 0.0;
                while t < spec.duration {
                    holds.push((t, uniform(&mut rng, (lo, hi))));
                    t += uniform(&mut rng, spec.step_dwell_range);
                }
                Trajectory::Piecewise(holds)
            }
            TrajectoryFamily::Sinusoid => Trajectory::Sine {
                offset: spec.offset,
                amplitude: spec.amplitude,
                omega: uniform(&mut rng, spec.frequency_range),
            },
            TrajectoryFamily::Ramp => {
                // Triangle: up to a random peak in the upper half of the range, back down.
                let mut segments = Vec::new();
                let (mut t, mut value, mut rising) = (0.0, lo, true);
                while t < spec.duration {
                    let slope = uniform(&mut rng, spec.slope_range);
                    let target = if rising {
                        uniform(&mut rng, (lo + 0.5 * (hi - lo), hi))
                    } else {
                        lo
                    };
                    let signed = if rising { slope } else { -slope };
                    segments.push((t, value, signed));
                    t += (target - value).abs() / slope;
                    value = target;
                    rising = !rising;
                }
                Trajectory::Ramps(segments)
            }
            TrajectoryFamily::Stairs => {
                let steps = ((hi - lo) / spec.increment).floor() as usize;
                let mut holds = Vec::new();
                let mut t = 0.0;
                'outer: loop {
                    for k in (0..=steps).chain((0..steps).rev()) {
                        if t >= spec.duration {
                            break 'outer;
                        }
                        holds.push((t, lo + k as f64 * spec.increment));
                        t += spec.stair_dwell;
                    }
                }
                Trajectory::Piecewise(holds)
            }
        };
        Ok(traj)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            Trajectory::Piecewise(holds) => {
                let idx = holds.partition_point(|&(start, _)| start <= t);
                holds[idx.saturating_sub(1)].1
            }
            Trajectory::Sine {
                offset,
                amplitude,
                omega,
            } => offset + amplitude * (omega * t).sin(),
            Trajectory::Ramps(segments) => {
                let idx = segments.partition_point(|&(start, _, _)| start <= t);
                let (start, value, slope) = segments[idx.saturating_sub(1)];
                value + slope * (t - start)
            }
        }
    }

    /// `round(duration · rate)` samples at t = k / rate.
    pub fn sample(&self, duration: f64, rate_hz: f64) -> Vec<f64> {
        let n = (duration * rate_hz).round() as usize;
        (0..n).map(|k| self.value_at(k as f64 / rate_hz)).collect()
    }
}

/// Desired positions at `rate_hz` for one trajectory spec.
pub fn gen_trajectory(spec: &TrajectorySpec, rate_hz: f64) -> Result<Vec<f64>> {
    Ok(Trajectory::build(spec)?.sample(spec.duration, rate_hz))
}

/// The step suite used to probe generalization: each target held for `hold` seconds,
/// with hold sets concatenated in order.
pub fn step_suite(targets: &[f64], holds: &[f64]) -> (Trajectory, Vec<(f64, f64, f64)>) {
    let mut pieces = Vec::new();
    let mut segments = Vec::new();
    let mut t = 0.0;
    for &hold in holds {
        let start = t;
        for &target in targets {
            pieces.push((t, target));
            t += hold;
        }
        segments.push((hold, start, t));
    }
    (Trajectory::Piecewise(pieces), segments)
}
