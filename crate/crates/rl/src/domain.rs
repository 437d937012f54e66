//! Per-episode randomization of the finger's physical parameters.

use rand::Rng;
use serde::{Deserialize, Serialize};
use tendonsim_core::config::FingerConfig;

/// Multipliers on nominal values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainParams {
    pub joint_friction_scale: f64,
    pub link_mass_scale: f64,
    pub spool_radius_scale: f64,
    pub joint_spring_scale: f64,
}

impl DomainParams {
    pub const NOMINAL: DomainParams = DomainParams {
        joint_friction_scale: 1.0,
        link_mass_scale: 1.0,
        spool_radius_scale: 1.0,
        joint_spring_scale: 1.0,
    };

    pub fn scales(&self) -> [f64; 4] {
        [
            self.joint_friction_scale,
            self.link_mass_scale,
            self.spool_radius_scale,
            self.joint_spring_scale,
        ]
    }

    pub fn apply(&self, nominal: &FingerConfig) -> FingerConfig {
        let mut c = nominal.clone();
        c.joint_friction = nominal.joint_friction.map(|v| v * self.joint_friction_scale);
        c.link_masses = nominal.link_masses.map(|v| v * self.link_mass_scale);
        c.spool_radius = nominal.spool_radius * self.spool_radius_scale;
        c.joint_stiffness = nominal.joint_stiffness.map(|v| v * self.joint_spring_scale);
        c
    }
}

/// Each multiplier independent and uniform on [1 − spread, 1 + spread]; all
/// ones when `enabled` is false.
pub fn sample_domain_params<R: Rng>(rng: &mut R, enabled: bool, spread: f64) -> DomainParams {
    if !enabled || spread == 0.0 {
        return DomainParams::NOMINAL;
    }
    let mut draw = || rng.random_range(1.0 - spread..=1.0 + spread);
    DomainParams {
        joint_friction_scale: draw(),
        link_mass_scale: draw(),
        spool_radius_scale: draw(),
        joint_spring_scale: draw(),
    }
}
