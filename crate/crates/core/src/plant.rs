//! Mechanical side of the tendon system: a spring-mass load or the coupled two-joint finger.
//!
//! Integration is semi-implicit Euler (velocity first, then position). The stiff,
//! dissipative terms (damping, regularized Coulomb friction, and active contact
//! springs) are linearized into the velocity solve so the 400 Hz step stays stable
//! for the light distal links. Joint springs and the tendon force are explicit,
//! which keeps the undamped spring-mass exactly symplectic.

use serde::{Deserialize, Serialize};

use crate::config::{FingerConfig, PlantConfig, SpringMassConfig};
use crate::error::{CoreError, Result};

/// Velocity scale of the tanh-regularized Coulomb friction, rad/s (or m/s).
pub const FRICTION_EPSILON: f64 = 1.0e-3;

pub const DEFAULT_OBSTACLE_STIFFNESS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub t: f64,
    /// Joint angles (finger) or displacement in `q[0]` (spring-mass).
    pub q: [f64; 2],
    pub qd: [f64; 2],
    pub tendon_length: f64,
    pub tendon_velocity: f64,
    /// Load-side tendon tension F_s, never negative.
    pub tendon_tension: f64,
}

/// Unilateral torsional stop on one joint, active over a time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub blocked_joint: usize,
    pub block_angle: f64,
    pub contact_stiffness: f64,
    /// [start, end) in seconds of simulation time.
    pub active_interval: (f64, f64),
}

impl Obstacle {
    pub fn new(blocked_joint: usize, block_angle: f64, active_interval: (f64, f64)) -> Self {
        Self {
            blocked_joint,
            block_angle,
            contact_stiffness: DEFAULT_OBSTACLE_STIFFNESS,
            active_interval,
        }
    }

    /// A rigid item in front of the whole finger: the same stop on both joints.
    pub fn both_joints(block_angle: f64, active_interval: (f64, f64)) -> [Obstacle; 2] {
        [
            Obstacle::new(0, block_angle, active_interval),
            Obstacle::new(1, block_angle, active_interval),
        ]
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.active_interval.0 && t < self.active_interval.1
    }
}

/// Stiffness contribution and torque of every active unilateral stop on one coordinate.
fn stop_terms(
    coord: usize,
    q: f64,
    t: f64,
    obstacles: &[Obstacle],
    limit: Option<(f64, f64)>,
) -> (f64, f64) {
    let mut torque = 0.0;
    let mut stiffness = 0.0;
    let stops = obstacles
        .iter()
        .filter(|o| o.blocked_joint == coord && o.is_active(t))
        .map(|o| (o.block_angle, o.contact_stiffness))
        .chain(limit);
    for (angle, k) in stops {
        if q > angle {
            torque -= k * (q - angle);
            stiffness += k;
        }
    }
    (torque, stiffness)
}

pub fn tendon_to_motor(length: f64, velocity: f64, spool_radius: f64) -> (f64, f64) {
    (length / spool_radius, velocity / spool_radius)
}

pub fn joint_spring_torque(q: f64, rest: f64, stiffness: f64) -> f64 {
    -stiffness * (q - rest)
}

/// Planar forward kinematics of the two-link chain, base at the origin.
pub fn fingertip_position(q: [f64; 2], config: &FingerConfig) -> (f64, f64) {
    let [l1, l2] = config.link_lengths;
    let a12 = q[0] + q[1];
    (
        l1 * q[0].cos() + l2 * a12.cos(),
        l1 * q[0].sin() + l2 * a12.sin(),
    )
}

pub fn load_cell_reading(state: &PlantState) -> f64 {
    state.tendon_tension
}

fn regularized_coulomb(level: f64, v: f64) -> (f64, f64) {
    let x = v / FRICTION_EPSILON;
    let th = x.tanh();
    (level * th, level * (1.0 - th * th) / FRICTION_EPSILON)
}

fn solve2(a: [[f64; 2]; 2], b: [f64; 2]) -> [f64; 2] {
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    [
        (b[0] * a[1][1] - a[0][1] * b[1]) / det,
        (a[0][0] * b[1] - b[0] * a[1][0]) / det,
    ]
}

/// Link inertia matrix of the planar chain (uniform rods) plus the motor inertia
/// reflected along the tendon direction.
pub fn finger_mass_matrix(config: &FingerConfig, q: [f64; 2]) -> [[f64; 2]; 2] {
    let [m1, m2] = config.link_masses;
    let [l1, l2] = config.link_lengths;
    let (c1, c2) = (l1 / 2.0, l2 / 2.0);
    let (i1, i2) = (m1 * l1 * l1 / 12.0, m2 * l2 * l2 / 12.0);
    let cos2 = q[1].cos();
    let m11 = m1 * c1 * c1 + i1 + m2 * (l1 * l1 + c2 * c2 + 2.0 * l1 * c2 * cos2) + i2;
    let m12 = m2 * (c2 * c2 + l1 * c2 * cos2) + i2;
    let m22 = m2 * c2 * c2 + i2;
    let a = config.moment_arms;
    let mt = config.tendon_mass;
    [
        [m11 + mt * a[0] * a[0], m12 + mt * a[0] * a[1]],
        [m12 + mt * a[0] * a[1], m22 + mt * a[1] * a[1]],
    ]
}

fn finger_coriolis(config: &FingerConfig, q: [f64; 2], qd: [f64; 2]) -> [f64; 2] {
    let h = config.link_masses[1] * config.link_lengths[0] * (config.link_lengths[1] / 2.0)
        * q[1].sin();
    [-h * (2.0 * qd[0] * qd[1] + qd[1] * qd[1]), h * qd[0] * qd[0]]
}

impl PlantState {
    pub fn at_rest(config: &PlantConfig) -> Self {
        let q = match config {
            PlantConfig::SpringMass(_) => [0.0, 0.0],
            PlantConfig::Finger(c) => c.rest_configuration,
        };
        let mut state = Self {
            t: 0.0,
            q,
            qd: [0.0; 2],
            tendon_length: 0.0,
            tendon_velocity: 0.0,
            tendon_tension: 0.0,
        };
        state.refresh_tendon(config);
        state
    }

    /// Recomputes l and l̇ from q and q̇ under the routing model.
    pub fn refresh_tendon(&mut self, config: &PlantConfig) {
        let (l, ld) = tendon_kinematics(config, self.q, self.qd);
        self.tendon_length = l;
        self.tendon_velocity = ld;
    }

    /// Motor angle and velocity implied by the tendon state.
    pub fn motor_angle(&self, config: &PlantConfig) -> (f64, f64) {
        tendon_to_motor(
            self.tendon_length,
            self.tendon_velocity,
            config.spool_radius(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.q.iter().chain(&self.qd).all(|v| v.is_finite())
            && self.tendon_length.is_finite()
            && self.tendon_velocity.is_finite()
            && self.tendon_tension.is_finite()
    }
}

pub fn tendon_kinematics(config: &PlantConfig, q: [f64; 2], qd: [f64; 2]) -> (f64, f64) {
    match config {
        PlantConfig::SpringMass(_) => (q[0], qd[0]),
        PlantConfig::Finger(c) => {
            let a = c.moment_arms;
            let r = c.rest_configuration;
            (
                a[0] * (q[0] - r[0]) + a[1] * (q[1] - r[1]),
                a[0] * qd[0] + a[1] * qd[1],
            )
        }
    }
}

/// Advances the plant by `dt` under a tendon tension held constant over the step.
pub fn step_plant(
    state: &PlantState,
    config: &PlantConfig,
    tendon_force: f64,
    obstacles: &[Obstacle],
    dt: f64,
) -> Result<PlantState> {
    if !tendon_force.is_finite() {
        return Err(CoreError::IntegrationFailure {
            t: state.t,
            detail: format!("non-finite tendon force {tendon_force}"),
        });
    }
    if !state.is_finite() {
        return Err(CoreError::IntegrationFailure {
            t: state.t,
            detail: "non-finite plant state".into(),
        });
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(CoreError::IntegrationFailure {
            t: state.t,
            detail: format!("invalid timestep {dt}"),
        });
    }
    let force = tendon_force.max(0.0);
    let mut next = match config {
        PlantConfig::SpringMass(c) => step_spring_mass(state, c, force, obstacles, dt),
        PlantConfig::Finger(c) => step_finger(state, c, force, obstacles, dt),
    };
    next.t = state.t + dt;
    next.tendon_tension = force;
    next.refresh_tendon(config);
    if !next.is_finite() {
        return Err(CoreError::IntegrationFailure {
            t: state.t,
            detail: format!("state diverged under force {force}"),
        });
    }
    Ok(next)
}

fn step_spring_mass(
    state: &PlantState,
    c: &SpringMassConfig,
    force: f64,
    obstacles: &[Obstacle],
    dt: f64,
) -> PlantState {
    let (x, v) = (state.q[0], state.qd[0]);
    let (contact, k_contact) = stop_terms(0, x, state.t, obstacles, None);
    let (fric, dfric) = regularized_coulomb(c.friction, v);
    let tau = force - c.stiffness * x - c.damping * v - fric + contact;
    let b = c.damping + dfric;
    let lhs = c.effective_mass + dt * b + dt * dt * k_contact;
    let v_next = (c.effective_mass * v + dt * tau + dt * b * v) / lhs;
    let mut next = state.clone();
    next.qd[0] = v_next;
    next.q[0] = x + dt * v_next;
    next
}

fn step_finger(
    state: &PlantState,
    c: &FingerConfig,
    force: f64,
    obstacles: &[Obstacle],
    dt: f64,
) -> PlantState {
    let (q, qd) = (state.q, state.qd);
    let m = finger_mass_matrix(c, q);
    let cor = finger_coriolis(c, q, qd);
    let mut tau = [0.0; 2];
    let mut b = [0.0; 2];
    let mut k = [0.0; 2];
    for i in 0..2 {
        let (contact, k_contact) = stop_terms(
            i,
            q[i],
            state.t,
            obstacles,
            Some((c.joint_limit, c.limit_stiffness)),
        );
        let (fric, dfric) = regularized_coulomb(c.joint_friction[i], qd[i]);
        tau[i] = c.moment_arms[i] * force
            + joint_spring_torque(q[i], c.rest_configuration[i], c.joint_stiffness[i])
            - c.joint_damping[i] * qd[i]
            - fric
            + contact
            - cor[i];
        b[i] = c.joint_damping[i] + dfric;
        k[i] = k_contact;
    }
    let mut lhs = m;
    let mut rhs = [0.0; 2];
    for i in 0..2 {
        lhs[i][i] += dt * b[i] + dt * dt * k[i];
        rhs[i] = m[i][0] * qd[0] + m[i][1] * qd[1] + dt * tau[i] + dt * b[i] * qd[i];
    }
    let qd_next = solve2(lhs, rhs);
    let mut next = state.clone();
    next.qd = qd_next;
    next.q = [q[0] + dt * qd_next[0], q[1] + dt * qd_next[1]];
    next
}

/// Tendon tension that would leave the tendon coordinate unaccelerated, ignoring
/// velocity-dependent terms. Used by the servo's stick regime.
pub fn static_tendon_load(state: &PlantState, config: &PlantConfig, obstacles: &[Obstacle]) -> f64 {
    match config {
        PlantConfig::SpringMass(c) => {
            let (contact, _) = stop_terms(0, state.q[0], state.t, obstacles, None);
            c.stiffness * state.q[0] - contact
        }
        PlantConfig::Finger(c) => {
            let m = finger_mass_matrix(c, state.q);
            let mut other = [0.0; 2];
            for (i, o) in other.iter_mut().enumerate() {
                let (contact, _) = stop_terms(
                    i,
                    state.q[i],
                    state.t,
                    obstacles,
                    Some((c.joint_limit, c.limit_stiffness)),
                );
                *o = joint_spring_torque(state.q[i], c.rest_configuration[i], c.joint_stiffness[i])
                    + contact;
            }
            let minv_a = solve2(m, c.moment_arms);
            let minv_o = solve2(m, other);
            let a = c.moment_arms;
            -(a[0] * minv_o[0] + a[1] * minv_o[1]) / (a[0] * minv_a[0] + a[1] * minv_a[1])
        }
    }
}

/// Inertia felt along the tendon coordinate, 1 / (aᵀ M⁻¹ a), in kg.
pub fn tendon_inertia(state: &PlantState, config: &PlantConfig) -> f64 {
    match config {
        PlantConfig::SpringMass(c) => c.effective_mass,
        PlantConfig::Finger(c) => {
            let m = finger_mass_matrix(c, state.q);
            let minv_a = solve2(m, c.moment_arms);
            1.0 / (c.moment_arms[0] * minv_a[0] + c.moment_arms[1] * minv_a[1])
        }
    }
}

/// Kinetic plus spring potential energy (contacts excluded).
pub fn mechanical_energy(state: &PlantState, config: &PlantConfig) -> f64 {
    match config {
        PlantConfig::SpringMass(c) => {
            0.5 * c.effective_mass * state.qd[0].powi(2) + 0.5 * c.stiffness * state.q[0].powi(2)
        }
        PlantConfig::Finger(c) => {
            let m = finger_mass_matrix(c, state.q);
            let qd = state.qd;
            let kinetic = 0.5
                * (m[0][0] * qd[0] * qd[0] + 2.0 * m[0][1] * qd[0] * qd[1] + m[1][1] * qd[1] * qd[1]);
            let potential: f64 = (0..2)
                .map(|i| 0.5 * c.joint_stiffness[i] * (state.q[i] - c.rest_configuration[i]).powi(2))
                .sum();
            kinetic + potential
        }
    }
}

/// Owned plant instance: config plus current state.
#[derive(Debug, Clone)]
pub struct Plant {
    pub config: PlantConfig,
    pub state: PlantState,
}

impl Plant {
    pub fn new(config: PlantConfig) -> Self {
        let state = PlantState::at_rest(&config);
        Self { config, state }
    }

    pub fn step(&mut self, tendon_force: f64, obstacles: &[Obstacle], dt: f64) -> Result<()> {
        self.state = step_plant(&self.state, &self.config, tendon_force, obstacles, dt)?;
        Ok(())
    }

    pub fn motor_angle(&self) -> (f64, f64) {
        self.state.motor_angle(&self.config)
    }

    /// Tip position for fingers; spring-mass reports (x, 0).
    pub fn tip(&self) -> (f64, f64) {
        match &self.config {
            PlantConfig::Finger(c) => fingertip_position(self.state.q, c),
            PlantConfig::SpringMass(_) => (self.state.q[0], 0.0),
        }
    }
}
