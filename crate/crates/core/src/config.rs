//! Plain-data configuration for plants, the surrogate servo, and simulation rates.
//!
//! Every section deserializes from TOML with defaults for omitted keys, and
//! every section has a `validate` that names the offending field on failure.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Spool radius of the reference servo, in meters.
pub const SPOOL_RADIUS: f64 = 0.0125;

/// Motor rotor and gearbox inertia reflected to the tendon coordinate (J / r²), in kg.
pub const REFLECTED_MOTOR_MASS: f64 = 30.0;

pub const NOMINAL_SPRING_STIFFNESS: f64 = 150.0;

fn check_positive(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(CoreError::invalid(field, format!("must be > 0, got {value}")))
    }
}

fn check_non_negative(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(CoreError::invalid(field, format!("must be >= 0, got {value}")))
    }
}

fn check_finite(field: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(CoreError::invalid(field, format!("must be finite, got {value}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlantKind {
    SpringMass,
    Finger,
}

/// Tendon pulling a linear spring through an effective mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpringMassConfig {
    /// N/m
    pub stiffness: f64,
    /// J/r² + m, kg
    pub effective_mass: f64,
    /// N·s/m
    pub damping: f64,
    /// Coulomb level on the load side, N
    pub friction: f64,
    pub spool_radius: f64,
}

impl Default for SpringMassConfig {
    fn default() -> Self {
        Self {
            stiffness: NOMINAL_SPRING_STIFFNESS,
            effective_mass: REFLECTED_MOTOR_MASS,
            damping: 10.0,
            friction: 0.0,
            spool_radius: SPOOL_RADIUS,
        }
    }
}

impl SpringMassConfig {
    pub fn with_stiffness_scale(scale: f64) -> Self {
        Self {
            stiffness: NOMINAL_SPRING_STIFFNESS * scale,
            ..Self::default()
        }
    }
}

/// Planar two-link finger with one tendon flexing both joints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FingerConfig {
    /// Torsional stiffness per joint, N·m/rad
    pub joint_stiffness: [f64; 2],
    pub link_masses: [f64; 2],
    pub link_lengths: [f64; 2],
    /// Constant tendon moment arm per joint, m
    pub moment_arms: [f64; 2],
    pub joint_damping: [f64; 2],
    /// Coulomb level per joint, N·m
    pub joint_friction: [f64; 2],
    pub spool_radius: f64,
    pub rest_configuration: [f64; 2],
    /// Motor inertia seen along the tendon coordinate, kg
    pub tendon_mass: f64,
    /// Self-contact angle per joint (fully curled), rad
    pub joint_limit: f64,
    /// Stiffness of the self-contact stop, N·m/rad
    pub limit_stiffness: f64,
}

impl Default for FingerConfig {
    fn default() -> Self {
        Self {
            joint_stiffness: [0.05, 0.05],
            link_masses: [0.010, 0.010],
            link_lengths: [0.050, 0.040],
            moment_arms: [0.008, 0.008],
            joint_damping: [5.0e-3, 5.0e-3],
            joint_friction: [2.0e-4, 2.0e-4],
            spool_radius: SPOOL_RADIUS,
            rest_configuration: [0.0, 0.0],
            tendon_mass: REFLECTED_MOTOR_MASS,
            joint_limit: PI / 2.0,
            limit_stiffness: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PlantConfig {
    SpringMass(SpringMassConfig),
    Finger(FingerConfig),
}

impl PlantConfig {
    pub fn kind(&self) -> PlantKind {
        match self {
            PlantConfig::SpringMass(_) => PlantKind::SpringMass,
            PlantConfig::Finger(_) => PlantKind::Finger,
        }
    }

    pub fn spool_radius(&self) -> f64 {
        match self {
            PlantConfig::SpringMass(c) => c.spool_radius,
            PlantConfig::Finger(c) => c.spool_radius,
        }
    }

    pub fn finger(&self) -> Option<&FingerConfig> {
        match self {
            PlantConfig::Finger(c) => Some(c),
            PlantConfig::SpringMass(_) => None,
        }
    }

    pub fn dof(&self) -> usize {
        match self {
            PlantConfig::SpringMass(_) => 1,
            PlantConfig::Finger(_) => 2,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        match self {
            PlantConfig::SpringMass(c) => {
                check_positive(&format!("{prefix}.stiffness"), c.stiffness)?;
                check_positive(&format!("{prefix}.effective_mass"), c.effective_mass)?;
                check_non_negative(&format!("{prefix}.damping"), c.damping)?;
                check_non_negative(&format!("{prefix}.friction"), c.friction)?;
                check_positive(&format!("{prefix}.spool_radius"), c.spool_radius)?;
            }
            PlantConfig::Finger(c) => {
                for i in 0..2 {
                    check_positive(&format!("{prefix}.joint_stiffness[{i}]"), c.joint_stiffness[i])?;
                    check_positive(&format!("{prefix}.link_masses[{i}]"), c.link_masses[i])?;
                    check_positive(&format!("{prefix}.link_lengths[{i}]"), c.link_lengths[i])?;
                    check_positive(&format!("{prefix}.moment_arms[{i}]"), c.moment_arms[i])?;
                    check_non_negative(&format!("{prefix}.joint_damping[{i}]"), c.joint_damping[i])?;
                    check_non_negative(&format!("{prefix}.joint_friction[{i}]"), c.joint_friction[i])?;
                    check_finite(
                        &format!("{prefix}.rest_configuration[{i}]"),
                        c.rest_configuration[i],
                    )?;
                }
                check_positive(&format!("{prefix}.spool_radius"), c.spool_radius)?;
                check_positive(&format!("{prefix}.tendon_mass"), c.tendon_mass)?;
                check_positive(&format!("{prefix}.joint_limit"), c.joint_limit)?;
                check_non_negative(&format!("{prefix}.limit_stiffness"), c.limit_stiffness)?;
            }
        }
        Ok(())
    }
}

/// Surrogate position-controlled servo. All quantities in the tendon force domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServoConfig {
    /// N/rad
    pub kp: f64,
    /// N/(rad·s)
    pub ki: f64,
    /// N·s/rad
    pub kd: f64,
    pub max_force: f64,
    pub coulomb_friction: f64,
    pub stiction_extra: f64,
    /// rad/s
    pub stribeck_velocity: f64,
    /// N·s/rad
    pub viscous_friction: f64,
    /// Command delay in servo ticks
    pub latency_steps: usize,
    /// Spool deadband, rad
    pub backlash: f64,
    /// Encoder resolution, rad (0 disables quantization)
    pub encoder_quantization: f64,
    pub encoder_velocity_noise_std: f64,
    /// Motor speed below which the stick regime may engage, rad/s
    pub stick_velocity: f64,
}

impl Default for ServoConfig {
    fn default() -> Self {
        Self {
            kp: 30.0,
            ki: 0.0,
            kd: 4.0,
            max_force: 21.0,
            coulomb_friction: 1.5,
            stiction_extra: 2.5,
            stribeck_velocity: 0.1,
            viscous_friction: 0.4,
            latency_steps: 4,
            backlash: 0.05,
            encoder_quantization: 2.0 * PI / 4096.0,
            encoder_velocity_noise_std: 0.01,
            stick_velocity: 0.02,
        }
    }
}

impl ServoConfig {
    /// Pure proportional control with every nonlinearity removed.
    pub fn linear(kp: f64, max_force: f64) -> Self {
        Self {
            kp,
            ki: 0.0,
            kd: 0.0,
            max_force,
            coulomb_friction: 0.0,
            stiction_extra: 0.0,
            stribeck_velocity: 1.0,
            viscous_friction: 0.0,
            latency_steps: 0,
            backlash: 0.0,
            encoder_quantization: 0.0,
            encoder_velocity_noise_std: 0.0,
            stick_velocity: 0.0,
        }
    }

    pub fn breakaway(&self) -> f64 {
        self.coulomb_friction + self.stiction_extra
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        for (name, v) in [("kp", self.kp), ("ki", self.ki), ("kd", self.kd)] {
            check_non_negative(&format!("{prefix}.{name}"), v)?;
        }
        check_positive(&format!("{prefix}.max_force"), self.max_force)?;
        check_non_negative(&format!("{prefix}.coulomb_friction"), self.coulomb_friction)?;
        check_non_negative(&format!("{prefix}.stiction_extra"), self.stiction_extra)?;
        check_positive(&format!("{prefix}.stribeck_velocity"), self.stribeck_velocity)?;
        check_non_negative(&format!("{prefix}.viscous_friction"), self.viscous_friction)?;
        check_non_negative(&format!("{prefix}.backlash"), self.backlash)?;
        check_non_negative(
            &format!("{prefix}.encoder_quantization"),
            self.encoder_quantization,
        )?;
        check_non_negative(
            &format!("{prefix}.encoder_velocity_noise_std"),
            self.encoder_velocity_noise_std,
        )?;
        check_non_negative(&format!("{prefix}.stick_velocity"), self.stick_velocity)?;
        Ok(())
    }
}

/// Integration, servo/logging, and control rates. Each must divide the simulation rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimRates {
    pub sim_hz: u32,
    pub data_hz: u32,
    pub control_hz: u32,
}

impl Default for SimRates {
    fn default() -> Self {
        Self {
            sim_hz: 400,
            data_hz: 80,
            control_hz: 20,
        }
    }
}

impl SimRates {
    pub fn dt_sim(&self) -> f64 {
        1.0 / self.sim_hz as f64
    }

    pub fn dt_data(&self) -> f64 {
        1.0 / self.data_hz as f64
    }

    pub fn dt_control(&self) -> f64 {
        1.0 / self.control_hz as f64
    }

    /// Plant substeps per servo tick.
    pub fn substeps_per_data_tick(&self) -> usize {
        (self.sim_hz / self.data_hz) as usize
    }

    pub fn substeps_per_control_tick(&self) -> usize {
        (self.sim_hz / self.control_hz) as usize
    }

    /// Servo ticks per control tick; also the 80 Hz → 20 Hz decimation factor.
    pub fn data_ticks_per_control_tick(&self) -> usize {
        (self.data_hz / self.control_hz) as usize
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        if self.sim_hz == 0 || self.data_hz == 0 || self.control_hz == 0 {
            return Err(CoreError::invalid(prefix, "rates must be nonzero"));
        }
        if self.sim_hz % self.data_hz != 0 {
            return Err(CoreError::invalid(
                format!("{prefix}.data_hz"),
                "must divide sim_hz",
            ));
        }
        if self.data_hz % self.control_hz != 0 {
            return Err(CoreError::invalid(
                format!("{prefix}.control_hz"),
                "must divide data_hz",
            ));
        }
        Ok(())
    }
}

/// The three data-collection systems: finger test bench plus weak and strong springs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemsConfig {
    pub finger: FingerConfig,
    pub weak_spring: SpringMassConfig,
    pub strong_spring: SpringMassConfig,
}

impl Default for SystemsConfig {
    fn default() -> Self {
        Self {
            finger: FingerConfig::default(),
            weak_spring: SpringMassConfig::with_stiffness_scale(0.5),
            strong_spring: SpringMassConfig::with_stiffness_scale(2.0),
        }
    }
}

pub const FINGER_ID: &str = "finger";
pub const WEAK_SPRING_ID: &str = "weak_spring";
pub const STRONG_SPRING_ID: &str = "strong_spring";

impl SystemsConfig {
    pub fn plant(&self, system_id: &str) -> Option<PlantConfig> {
        match system_id {
            FINGER_ID => Some(PlantConfig::Finger(self.finger.clone())),
            WEAK_SPRING_ID => Some(PlantConfig::SpringMass(self.weak_spring.clone())),
            STRONG_SPRING_ID => Some(PlantConfig::SpringMass(self.strong_spring.clone())),
            _ => None,
        }
    }

    /// (id, plant) pairs in canonical order.
    pub fn all(&self) -> Vec<(&'static str, PlantConfig)> {
        [FINGER_ID, STRONG_SPRING_ID, WEAK_SPRING_ID]
            .into_iter()
            .map(|id| (id, self.plant(id).expect("known id")))
            .collect()
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        PlantConfig::Finger(self.finger.clone()).validate(&format!("{prefix}.finger"))?;
        PlantConfig::SpringMass(self.weak_spring.clone())
            .validate(&format!("{prefix}.weak_spring"))?;
        PlantConfig::SpringMass(self.strong_spring.clone())
            .validate(&format!("{prefix}.strong_spring"))
    }
}
