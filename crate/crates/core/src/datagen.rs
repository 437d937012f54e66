//! Training-corpus generation: drive the surrogate rig through the command
//! families on every system, pass the tension through a simulated 20 Hz load
//! cell, and package episodes into a dataset.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{PlantConfig, ServoConfig, SimRates, SystemsConfig, FINGER_ID, STRONG_SPRING_ID, WEAK_SPRING_ID};
use crate::error::{CoreError, Result};
use crate::plant::Obstacle;
use crate::rig::SurrogateRig;
use crate::servo::fit_ideal_gain_clamped;
use crate::trajectory::{Trajectory, TrajectoryFamily, TrajectorySpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub t: f64,
    pub theta_d: f64,
    pub theta: f64,
    pub theta_dot: f64,
    /// Load-cell tension F_ℓ, N.
    pub force: f64,
    pub q: [f64; 2],
    pub tip: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub system_id: String,
    pub seed: u64,
    pub family: TrajectoryFamily,
    pub blocked: bool,
    pub split: Split,
    pub records: Vec<SampleRecord>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub episodes: Vec<Episode>,
    /// Hash of the configuration that produced the data.
    pub config_hash: String,
}

impl Dataset {
    pub fn sort_canonical(&mut self) {
        self.episodes
            .sort_by(|a, b| (&a.system_id, a.seed).cmp(&(&b.system_id, b.seed)));
    }

    pub fn len_records(&self) -> usize {
        self.episodes.iter().map(|e| e.records.len()).sum()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Episode> {
        self.episodes.iter().filter(move |e| e.split == split)
    }

    /// Digest over every episode's identity and raw sample bits.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for ep in &self.episodes {
            h.update(ep.system_id.as_bytes());
            h.update(ep.seed.to_le_bytes());
            h.update([ep.split as u8, ep.blocked as u8]);
            for r in &ep.records {
                for v in [r.t, r.theta_d, r.theta, r.theta_dot, r.force] {
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex(&h.finalize())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    Linear,
    ZeroOrderHold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoadCellConfig {
    pub rate_hz: u32,
    pub noise_std: f64,
    pub mode: ResampleMode,
}

impl Default for LoadCellConfig {
    fn default() -> Self {
        Self {
            rate_hz: 20,
            noise_std: 0.05,
            mode: ResampleMode::Linear,
        }
    }
}

/// Upsamples `factor`× between consecutive readings; output length is
/// `factor · (n − 1) + 1`.
pub fn resample_load_cell(readings: &[f64], factor: usize, mode: ResampleMode) -> Result<Vec<f64>> {
    if readings.len() < 2 {
        return Err(CoreError::TooFewReadings(readings.len()));
    }
    let mut out = Vec::with_capacity(factor * (readings.len() - 1) + 1);
    for w in readings.windows(2) {
        let (a, b) = (w[0], w[1]);
        for j in 0..factor {
            out.push(match mode {
                ResampleMode::Linear => a + (b - a) * (j as f64 / factor as f64),
                ResampleMode::ZeroOrderHold => a,
            });
        }
    }
    out.push(*readings.last().expect("len >= 2"));
    Ok(out)
}

/// Episode-level random split, stratified by system.
pub fn split_dataset(mut ds: Dataset, validation_fraction: f64, seed: u64) -> Result<Dataset> {
    if !(validation_fraction > 0.0 && validation_fraction < 0.5) {
        return Err(CoreError::invalid(
            "validation_fraction",
            format!("must be in (0, 0.5), got {validation_fraction}"),
        ));
    }
    ds.sort_canonical();
    let mut by_system: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, ep) in ds.episodes.iter().enumerate() {
        by_system.entry(ep.system_id.clone()).or_default().push(i);
    }
    for (system, mut idx) in by_system {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(system.as_bytes()));
        idx.shuffle(&mut rng);
        let n = idx.len();
        let min_val = usize::from(n >= 2);
        let n_val = ((validation_fraction * n as f64).round() as usize).clamp(min_val, n.saturating_sub(1).max(min_val));
        for (rank, &i) in idx.iter().enumerate() {
            ds.episodes[i].split = if rank < n_val {
                Split::Validation
            } else {
                Split::Train
            };
        }
    }
    Ok(ds)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf29ce484222325u64, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x100000001b3)
    })
}

/// Decorrelates per-episode seeds from the master seed.
pub fn derive_seed(master: u64, a: u64, b: u64) -> u64 {
    let mut z = master
        .wrapping_add(a.wrapping_mul(0x9E3779B97F4A7C15))
        .wrapping_add(b.wrapping_mul(0xBF58476D1CE4E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub id: String,
    pub plant: PlantConfig,
    pub servo: ServoConfig,
    pub share: f64,
}

/// Standard 50/25/25 finger / weak / strong allocation.
pub fn standard_systems(systems: &SystemsConfig, servo: &ServoConfig) -> Vec<SystemSpec> {
    [(FINGER_ID, 0.5), (WEAK_SPRING_ID, 0.25), (STRONG_SPRING_ID, 0.25)]
        .into_iter()
        .map(|(id, share)| SystemSpec {
            id: id.to_string(),
            plant: systems.plant(id).expect("known id"),
            servo: servo.clone(),
            share,
        })
        .collect()
}

/// Obstacle intervals replayed inside blocked finger episodes (times relative to
/// episode start).
pub fn default_blocking_schedule() -> Vec<Obstacle> {
    let mut stops = Vec::new();
    stops.extend(Obstacle::both_joints(0.35, (5.0, 15.0)));
    stops.push(Obstacle::new(1, 0.70, (18.0, 28.0)));
    stops.extend(Obstacle::both_joints(0.0, (32.0, 40.0)));
    stops.push(Obstacle::new(0, 0.80, (44.0, 54.0)));
    stops
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatagenConfig {
    pub total_minutes: f64,
    pub episode_seconds: f64,
    pub validation_fraction: f64,
    pub load_cell: LoadCellConfig,
    pub trajectory: TrajectorySpec,
    pub blocking_schedule: Vec<Obstacle>,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            total_minutes: 36.0,
            episode_seconds: 60.0,
            validation_fraction: 0.2,
            load_cell: LoadCellConfig::default(),
            trajectory: TrajectorySpec::default(),
            blocking_schedule: default_blocking_schedule(),
        }
    }
}

impl DatagenConfig {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(self.total_minutes > 0.0) {
            return Err(CoreError::invalid(format!("{prefix}.total_minutes"), "must be > 0"));
        }
        if !(self.episode_seconds > 0.0) {
            return Err(CoreError::invalid(format!("{prefix}.episode_seconds"), "must be > 0"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 0.5) {
            return Err(CoreError::invalid(
                format!("{prefix}.validation_fraction"),
                "must be in (0, 0.5)",
            ));
        }
        if !(self.load_cell.noise_std >= 0.0) || self.load_cell.rate_hz == 0 {
            return Err(CoreError::invalid(format!("{prefix}.load_cell"), "bad load-cell settings"));
        }
        self.trajectory.validate()
    }
}

/// Episode counts per system by largest remainder, at least one each.
fn allocate_episodes(shares: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = shares.iter().sum();
    let exact: Vec<f64> = shares.iter().map(|s| s / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .partial_cmp(&(exact[a] - exact[a].floor()))
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut remaining = total.saturating_sub(counts.iter().sum());
    for &i in order.iter().cycle().take(shares.len() * 2) {
        if remaining == 0 {
            break;
        }
        counts[i] += 1;
        remaining -= 1;
    }
    counts.iter().map(|&c| c.max(1)).collect()
}

/// Simulates one episode on the surrogate rig and returns its records, with the
/// force channel passed through the load-cell chain.
pub fn simulate_episode(
    system: &SystemSpec,
    trajectory: &Trajectory,
    duration: f64,
    obstacles: &[Obstacle],
    rates: SimRates,
    load_cell: &LoadCellConfig,
    seed: u64,
) -> Result<Vec<SampleRecord>> {
    let mut records = simulate_episode_raw(system, trajectory, duration, obstacles, rates, seed)?;
    apply_load_cell(&mut records, rates, load_cell, system.servo.max_force, seed)?;
    Ok(records)
}

/// Like [`simulate_episode`] but keeps the true tendon tension.
pub fn simulate_episode_raw(
    system: &SystemSpec,
    trajectory: &Trajectory,
    duration: f64,
    obstacles: &[Obstacle],
    rates: SimRates,
    seed: u64,
) -> Result<Vec<SampleRecord>> {
    let commands = trajectory.sample(duration, rates.data_hz as f64);
    let mut rig = SurrogateRig::new(system.plant.clone(), system.servo.clone(), rates, seed);
    let mut records = Vec::with_capacity(commands.len());
    for &theta_d in &commands {
        let tip = rig.plant.tip();
        let q = rig.plant.state.q;
        let reading = rig.tick(theta_d, obstacles)?;
        records.push(SampleRecord {
            t: reading.t,
            theta_d,
            theta: reading.theta,
            theta_dot: reading.theta_dot,
            force: reading.force,
            q,
            tip: [tip.0, tip.1],
        });
    }
    Ok(records)
}

/// The 20 Hz readings the load cell would report for a tension trace sampled
/// every data tick: every `factor`-th value, plus noise, clipped to the sensor range.
pub fn load_cell_readings(
    forces: &[f64],
    factor: usize,
    load_cell: &LoadCellConfig,
    max_force: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x10AD, 0xCE11));
    let noise = Normal::new(0.0, load_cell.noise_std.max(0.0))
        .map_err(|e| CoreError::invalid("load_cell.noise_std", e.to_string()))?;
    Ok(forces
        .iter()
        .step_by(factor.max(1))
        .map(|&f| {
            let n = if load_cell.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            (f + n).clamp(0.0, max_force)
        })
        .collect())
}

pub fn load_cell_factor(rates: SimRates, load_cell: &LoadCellConfig) -> usize {
    (rates.data_hz / load_cell.rate_hz).max(1) as usize
}

/// Replaces the true tension with what the load cell chain would report.
pub fn apply_load_cell(
    records: &mut [SampleRecord],
    rates: SimRates,
    load_cell: &LoadCellConfig,
    max_force: f64,
    seed: u64,
) -> Result<()> {
    let factor = load_cell_factor(rates, load_cell);
    let forces: Vec<f64> = records.iter().map(|r| r.force).collect();
    let readings = load_cell_readings(&forces, factor, load_cell, max_force, seed)?;
    let upsampled = resample_load_cell(&readings, factor, load_cell.mode)?;
    let last = *upsampled.last().expect("non-empty");
    for (i, r) in records.iter_mut().enumerate() {
        r.force = upsampled.get(i).copied().unwrap_or(last);
    }
    Ok(())
}

/// Generates the full corpus and assigns the train/validation split.
pub fn collect_dataset(
    systems: &[SystemSpec],
    config: &DatagenConfig,
    rates: SimRates,
    seed: u64,
) -> Result<Dataset> {
    let finger_count = systems
        .iter()
        .filter(|s| matches!(s.plant, PlantConfig::Finger(_)))
        .count();
    let spring_count = systems.len() - finger_count;
    if finger_count < 1 || spring_count < 2 {
        return Err(CoreError::invalid(
            "systems",
            "need at least one finger and two spring systems",
        ));
    }
    config.validate("datagen")?;

    let total = (config.total_minutes * 60.0 / config.episode_seconds).round() as usize;
    let shares: Vec<f64> = systems.iter().map(|s| s.share).collect();
    let counts = allocate_episodes(&shares, total);

    let mut episodes = Vec::new();
    for (si, (system, &count)) in systems.iter().zip(&counts).enumerate() {
        let is_finger = matches!(system.plant, PlantConfig::Finger(_));
        for j in 0..count {
            let ep_seed = derive_seed(seed, si as u64, j as u64);
            let family = TrajectoryFamily::ALL[j % TrajectoryFamily::ALL.len()];
            let blocked = is_finger && j % 8 >= 4;
            let spec = TrajectorySpec {
                family,
                duration: config.episode_seconds,
                seed: ep_seed,
                ..config.trajectory.clone()
            };
            let trajectory = Trajectory::build(&spec)?;
            let obstacles: &[Obstacle] = if blocked { &config.blocking_schedule } else { &[] };
            let records = simulate_episode(
                system,
                &trajectory,
                config.episode_seconds,
                obstacles,
                rates,
                &config.load_cell,
                ep_seed,
            )
            .map_err(|e| CoreError::EpisodeDiverged {
                system_id: system.id.clone(),
                family: family.to_string(),
                seed: ep_seed,
                source: Box::new(e),
            })?;
            episodes.push(Episode {
                system_id: system.id.clone(),
                seed: ep_seed,
                family,
                blocked,
                split: Split::Train,
                records,
            });
        }
    }

    let config_repr = serde_json::to_string(&(config, &rates, seed)).expect("serializable");
    let systems_repr: String = systems
        .iter()
        .map(|s| format!("{}:{:?}:{:?}:{}", s.id, s.plant, s.servo, s.share))
        .collect();
    let mut ds = Dataset {
        episodes,
        config_hash: sha256_hex(format!("{config_repr}|{systems_repr}").as_bytes()),
    };
    ds.sort_canonical();
    split_dataset(ds, config.validation_fraction, seed)
}

/// Re-fits the ideal-source gain on the training ramps of a surrogate corpus,
/// falling back to every training episode when the corpus has no ramps.
pub fn calibrate_ideal_gain(ds: &Dataset, max_force: f64) -> Result<f64> {
    let collect = |ramps_only: bool| -> Vec<(f64, f64, f64)> {
        ds.split(Split::Train)
            .filter(|e| !ramps_only || (e.family == TrajectoryFamily::Ramp && !e.blocked))
            .flat_map(|e| e.records.iter().map(|r| (r.theta_d, r.theta, r.force)))
            .collect()
    };
    let mut samples = collect(true);
    if samples.is_empty() {
        samples = collect(false);
    }
    fit_ideal_gain_clamped(&samples, max_force)
        .ok_or_else(|| CoreError::Dataset("no usable samples for gain calibration".into()))
}
