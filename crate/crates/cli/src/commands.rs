//! Subcommand bodies. Each returns the manifest of what it read and wrote.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use serde::Serialize;
use tendonsim_core::config::{FingerConfig, ServoConfig, SimRates, SystemsConfig};
use tendonsim_core::datagen::{calibrate_ideal_gain, collect_dataset, standard_systems, Dataset, Split};
use tendonsim_core::fsutil::{write_atomic, StagedDir};
use tendonsim_core::metrics::{rmse, std_abs_error};
use tendonsim_core::store::{load_dataset, save_dataset};
use tendonsim_estimators::train::train_estimator_with;
use tendonsim_estimators::{Arch, EstimatorModel, TrainOutcome};
use tendonsim_eval::force::predict_windowed;
use tendonsim_eval::{
    eval_contact, eval_generalization, eval_perturbed_sine, eval_policy_transfer, eval_sim2real_gap, EvalSetup,
    ExperimentOutput, NamedModel, TransferConfig,
};
use tendonsim_rl::deploy::Phase;
use tendonsim_rl::ppo::PolicyTrainOutcome;
use tendonsim_rl::{
    deploy_metrics, deploy_policy, train_policy, AlphaSchedule, DeployConfig, DeployRow, PolicySnapshot, PolicySource,
    PolicyTraining, UpdateStats,
};
use tendonsim_simforce::{replay_open_loop, SourceSpec, TickRecord};

use crate::args::{ConfigKind, Experiment, GainArgs, PolicySourceArg, RolloutSource};
use crate::failure::{ComputeError, UsageError};
use crate::files::{self, DatagenFile, PolicyFile, TrainFile};
use crate::manifest::RunManifest;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    Ok(w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?)
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    write_atomic(path, &csv_bytes(rows)?)?;
    Ok(())
}

/// `<out><suffix>` beside `out`.
fn with_suffix(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    out.with_file_name(name)
}

fn load_model(path: &Path) -> Result<EstimatorModel> {
    EstimatorModel::load(path).with_context(|| format!("loading estimator {}", path.display()))
}

fn load_data(path: &Path) -> Result<Dataset> {
    load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn load_snapshot(path: &Path) -> Result<PolicySnapshot> {
    PolicySnapshot::load(path).with_context(|| format!("loading policy {}", path.display()))
}

// ---- datagen ----

pub fn generate(file: &DatagenFile, seed: u64) -> Result<Dataset> {
    file.validate()?;
    let systems = standard_systems(&file.systems, &file.servo);
    Ok(collect_dataset(&systems, &file.datagen, file.rates, seed)?)
}

pub fn datagen(seed: u64, out: &Path, config: Option<&Path>, minutes: Option<f64>) -> Result<RunManifest> {
    let mut file: DatagenFile = files::load(config)?;
    if let Some(m) = minutes {
        file.datagen.total_minutes = m;
    }
    let mut manifest = RunManifest::new("datagen", seed);
    if let Some(c) = config {
        manifest.input(c)?;
    }
    manifest.config_hash = files::config_hash(&file);
    let ds = generate(&file, seed)?;
    save_dataset(&ds, out)?;
    println!(
        "episodes={} records={} dataset_hash={}",
        ds.episodes.len(),
        ds.len_records(),
        ds.content_hash()
    );
    manifest.output(out)?;
    Ok(manifest)
}

// ---- estimators ----

pub fn train_model(ds: &Dataset, file: &TrainFile, arch: Arch, verbose: bool) -> Result<TrainOutcome> {
    file.validate()?;
    let arch_cfg = file.arch_config(arch)?;
    let outcome = train_estimator_with(ds, &arch_cfg, &file.train, |log| {
        if verbose {
            eprintln!(
                "epoch {:>3} lr {:.2e} train {:.5} val {:.5} val_rmse {:.4} N",
                log.epoch, log.learning_rate, log.train_loss, log.val_loss, log.val_rmse
            );
        }
    })?;
    Ok(outcome)
}

#[allow(clippy::too_many_arguments)]
pub fn train_estimator(
    seed: u64,
    arch: Arch,
    data: &Path,
    out: &Path,
    config: Option<&Path>,
    epochs: Option<usize>,
    windows_per_epoch: Option<usize>,
) -> Result<RunManifest> {
    let mut file: TrainFile = files::load(config)?;
    file.train.seed = seed;
    if let Some(e) = epochs {
        file.train.epochs = e;
    }
    if let Some(w) = windows_per_epoch {
        file.train.windows_per_epoch = Some(w);
    }
    let mut manifest = RunManifest::new("train-estimator", seed);
    if let Some(c) = config {
        manifest.input(c)?;
    }
    manifest.input(data)?;
    manifest.config_hash = file.train.hash(&file.arch_config(arch)?);
    let ds = load_data(data)?;
    let outcome = train_model(&ds, &file, arch, true)?;
    outcome.model.save(out)?;
    let curve = with_suffix(out, ".curve.csv");
    write_csv(&curve, &outcome.curve)?;
    println!(
        "arch={} params={} best_epoch={} best_val_rmse={:.4}",
        arch,
        outcome.model.param_count(),
        outcome.model.meta.best_epoch,
        outcome.model.meta.best_val_rmse
    );
    manifest.output(out)?;
    manifest.output(&curve)?;
    Ok(manifest)
}

#[derive(Serialize)]
struct EpisodeScore {
    episode: String,
    system_id: String,
    family: String,
    blocked: bool,
    samples: usize,
    rmse: f64,
    std_abs_error: f64,
}

/// Per-validation-episode RMSE of clamped windowed predictions, then an `all` row.
pub fn estimator_report(model: &EstimatorModel, ds: &Dataset, max_force: f64) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    let (mut all_pred, mut all_truth) = (Vec::new(), Vec::new());
    for (i, ep) in ds.episodes.iter().enumerate().filter(|(_, e)| e.split == Split::Validation) {
        let indices: Vec<usize> = (0..ep.records.len()).collect();
        let pred = predict_windowed(model, &ep.records, &indices, max_force);
        let truth: Vec<f64> = ep.records.iter().map(|r| r.force).collect();
        rows.push(EpisodeScore {
            episode: i.to_string(),
            system_id: ep.system_id.clone(),
            family: ep.family.to_string(),
            blocked: ep.blocked,
            samples: pred.len(),
            rmse: rmse(&pred, &truth),
            std_abs_error: std_abs_error(&pred, &truth),
        });
        all_pred.extend(pred);
        all_truth.extend(truth);
    }
    if rows.is_empty() {
        return Err(tendonsim_core::CoreError::Dataset("dataset has no validation episodes".into()).into());
    }
    rows.push(EpisodeScore {
        episode: "all".into(),
        system_id: "all".into(),
        family: "all".into(),
        blocked: false,
        samples: all_pred.len(),
        rmse: rmse(&all_pred, &all_truth),
        std_abs_error: std_abs_error(&all_pred, &all_truth),
    });
    let overall = rows.last().map(|r| r.rmse).unwrap_or(f64::NAN);
    if !overall.is_finite() {
        return Err(ComputeError("estimator produced non-finite predictions".into()).into());
    }
    csv_bytes(rows)
}

pub fn eval_estimator(seed: u64, model_path: &Path, data: &Path, report: &Path) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("eval-estimator", seed);
    manifest.input(model_path)?;
    manifest.input(data)?;
    let model = load_model(model_path)?;
    let ds = load_data(data)?;
    let bytes = estimator_report(&model, &ds, ServoConfig::default().max_force)?;
    write_atomic(report, &bytes)?;
    manifest.output(report)?;
    Ok(manifest)
}

// ---- rollout ----

#[derive(Serialize)]
struct TickRow {
    t: f64,
    theta_d: f64,
    theta: f64,
    theta_dot: f64,
    force: f64,
    tip_x: f64,
    tip_y: f64,
}

impl From<&TickRecord> for TickRow {
    fn from(r: &TickRecord) -> Self {
        Self {
            t: r.t,
            theta_d: r.theta_d,
            theta: r.theta,
            theta_dot: r.theta_dot,
            force: r.force,
            tip_x: r.tip.0,
            tip_y: r.tip.1,
        }
    }
}

fn read_commands(path: &Path) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading trajectory {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = headers.iter().position(|h| h.trim() == "theta_d").ok_or_else(|| {
        tendonsim_core::CoreError::Parse {
            path: path.to_path_buf(),
            reason: "missing `theta_d` column".into(),
        }
    })?;
    let mut out = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let value: f64 = record.get(col).unwrap_or("").trim().parse().map_err(|_| tendonsim_core::CoreError::Parse {
            path: path.to_path_buf(),
            reason: format!("row {}: theta_d is not a number", line + 1),
        })?;
        out.push(value);
    }
    if out.is_empty() {
        return Err(tendonsim_core::CoreError::Parse {
            path: path.to_path_buf(),
            reason: "trajectory has no rows".into(),
        }
        .into());
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
pub fn rollout(
    seed: u64,
    source: RolloutSource,
    model: Option<&Path>,
    gain: Option<f64>,
    system: &str,
    traj: &Path,
    out: &Path,
) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("rollout", seed);
    manifest.input(traj)?;
    let servo = ServoConfig::default();
    let spec = match source {
        RolloutSource::Ideal => SourceSpec::Ideal {
            gain: gain.ok_or_else(|| usage("--source ideal needs --gain"))?,
        },
        RolloutSource::Learned => {
            let path = model.ok_or_else(|| usage("--source learned needs --model"))?;
            manifest.input(path)?;
            SourceSpec::Learned(Arc::new(load_model(path)?))
        }
        RolloutSource::Surrogate => SourceSpec::Surrogate {
            servo: servo.clone(),
            seed,
        },
    };
    let plant = SystemsConfig::default()
        .plant(system)
        .ok_or_else(|| usage(format!("unknown system `{system}` (finger, weak_spring, strong_spring)")))?;
    let commands = read_commands(traj)?;
    let runs = replay_open_loop(&plant, &[spec], &commands, SimRates::default(), servo.max_force, &[])?;
    write_csv(out, runs[0].iter().map(TickRow::from))?;
    manifest.output(out)?;
    Ok(manifest)
}

// ---- policies ----

fn ideal_gain(gain: &GainArgs, manifest: &mut RunManifest, max_force: f64) -> Result<Option<f64>> {
    if let Some(g) = gain.gain {
        return Ok(Some(g));
    }
    if let Some(data) = &gain.data {
        manifest.input(data)?;
        return Ok(Some(calibrate_ideal_gain(&load_data(data)?, max_force)?));
    }
    Ok(None)
}

pub fn policy_training(
    source: PolicySource,
    file: &PolicyFile,
    seed: u64,
    on_update: Option<Box<dyn FnMut(&UpdateStats) + '_>>,
) -> Result<PolicyTrainOutcome> {
    file.validate()?;
    let mut t = PolicyTraining::new(source, file.finger.clone(), seed);
    t.rates = file.rates;
    t.env = file.env.clone();
    t.policy = file.policy.clone();
    t.ppo = file.ppo.clone();
    t.on_update = on_update;
    Ok(train_policy(t)?)
}

fn log_update(s: &UpdateStats) {
    let eval = s.eval_return.map(|e| format!(" eval {e:.3}")).unwrap_or_default();
    eprintln!(
        "update {:>4} reward {:.4} policy_loss {:.4} value_loss {:.4} kl {:.4}{}",
        s.update, s.mean_step_reward, s.policy_loss, s.value_loss, s.approx_kl, eval
    );
}

#[allow(clippy::too_many_arguments)]
pub fn train_policy_cmd(
    seed: u64,
    source: PolicySourceArg,
    model: Option<&Path>,
    gain: &GainArgs,
    config: Option<&Path>,
    out: &Path,
    updates: Option<usize>,
) -> Result<RunManifest> {
    let mut file: PolicyFile = files::load(config)?;
    if let Some(u) = updates {
        file.ppo.total_updates = u;
    }
    let mut manifest = RunManifest::new("train-policy", seed);
    if let Some(c) = config {
        manifest.input(c)?;
    }
    manifest.config_hash = files::config_hash(&file);
    let source = match source {
        PolicySourceArg::Learned => {
            let path = model.ok_or_else(|| usage("--source learned needs --model"))?;
            manifest.input(path)?;
            PolicySource::Learned(Arc::new(load_model(path)?))
        }
        PolicySourceArg::Ideal => PolicySource::Ideal {
            gain: ideal_gain(gain, &mut manifest, file.env.max_force)?
                .ok_or_else(|| usage("--source ideal needs --gain or --data"))?,
        },
    };
    let outcome = policy_training(source, &file, seed, Some(Box::new(log_update)))?;
    outcome.best.save(out)?;
    let curve = with_suffix(out, ".curve.csv");
    write_csv(&curve, outcome.stats.iter().map(StatsRow::from))?;
    println!(
        "best_update={} eval_return={:.4}",
        outcome.best.meta.update, outcome.best.meta.eval_return
    );
    manifest.output(out)?;
    manifest.output(&curve)?;
    Ok(manifest)
}

#[derive(Serialize)]
struct StatsRow {
    update: usize,
    mean_step_reward: f64,
    episode_return: f64,
    policy_loss: f64,
    value_loss: f64,
    approx_kl: f64,
    clip_fraction: f64,
    eval_return: Option<f64>,
}

impl From<&UpdateStats> for StatsRow {
    fn from(s: &UpdateStats) -> Self {
        Self {
            update: s.update,
            mean_step_reward: s.mean_step_reward,
            episode_return: s.episode_return,
            policy_loss: s.policy_loss,
            value_loss: s.value_loss,
            approx_kl: s.approx_kl,
            clip_fraction: s.clip_fraction,
            eval_return: s.eval_return,
        }
    }
}

#[derive(Serialize)]
struct StairsRow {
    t: f64,
    alpha: f64,
    phase: &'static str,
    action: f64,
    theta_d: f64,
    theta: f64,
    force: f64,
    tip_x: f64,
    tip_y: f64,
    goal_x: f64,
    goal_y: f64,
    error_mm: f64,
}

impl From<&DeployRow> for StairsRow {
    fn from(r: &DeployRow) -> Self {
        Self {
            t: r.t,
            alpha: r.alpha,
            phase: match r.phase {
                Phase::Up => "up",
                Phase::Down => "down",
            },
            action: r.action,
            theta_d: r.theta_d,
            theta: r.theta,
            force: r.force,
            tip_x: r.tip_x,
            tip_y: r.tip_y,
            goal_x: r.goal_x,
            goal_y: r.goal_y,
            error_mm: r.error * 1e3,
        }
    }
}

/// Stairs deployment on the surrogate finger, written as CSV.
pub fn stairs(snapshot: &PolicySnapshot, dwell: f64, seed: u64, out: &Path) -> Result<()> {
    if !(dwell > 0.0 && dwell.is_finite()) {
        return Err(usage("--dwell must be positive"));
    }
    let cfg = DeployConfig {
        schedule: AlphaSchedule::stairs(dwell),
        servo_seed: seed,
        ..DeployConfig::default()
    };
    let log = deploy_policy(snapshot, &FingerConfig::default(), &cfg)?;
    let m = deploy_metrics(&log, cfg.rates, TransferConfig::default().transient_skip_s);
    println!(
        "rmse_mm={:.3} rmse_up_mm={:.3} rmse_down_mm={:.3} opening_max_error_mm={:.3}",
        m.rmse * 1e3,
        m.rmse_up * 1e3,
        m.rmse_down * 1e3,
        m.opening_max_error * 1e3
    );
    write_csv(out, log.iter().map(StairsRow::from))
}

pub fn eval_policy(seed: u64, snapshot: &Path, dwell: f64, out: &Path) -> Result<RunManifest> {
    let mut manifest = RunManifest::new("eval-policy", seed);
    manifest.input(snapshot)?;
    stairs(&load_snapshot(snapshot)?, dwell, seed, out)?;
    manifest.output(out)?;
    Ok(manifest)
}

// ---- experiments ----

pub struct EvalInputs<'a> {
    pub gain: &'a GainArgs,
    pub model: Option<&'a Path>,
    pub mlp: Option<&'a Path>,
    pub rnn: Option<&'a Path>,
    pub transformer: Option<&'a Path>,
    pub learned_policy: Option<&'a Path>,
    pub ideal_policy: Option<&'a Path>,
}

fn single_model(inputs: &EvalInputs<'_>, what: &str, manifest: &mut RunManifest) -> Result<EstimatorModel> {
    let path = inputs.model.ok_or_else(|| usage(format!("--experiment {what} needs --model")))?;
    manifest.input(path)?;
    load_model(path)
}

pub fn run_experiment(
    experiment: Experiment,
    setup: &EvalSetup,
    inputs: &EvalInputs<'_>,
    manifest: &mut RunManifest,
) -> Result<ExperimentOutput> {
    match experiment {
        Experiment::Generalization => {
            let mut models = Vec::new();
            for (name, path) in [("mlp", inputs.mlp), ("rnn", inputs.rnn), ("transformer", inputs.transformer)] {
                if let Some(p) = path {
                    models.push((name, load_model(p)?));
                }
            }
            if let (Some(p), true) = (inputs.model, models.is_empty()) {
                let m = load_model(p)?;
                models.push((m.arch().name(), m));
            }
            if models.is_empty() {
                return Err(usage("--experiment generalization needs --mlp, --rnn, --transformer, or --model"));
            }
            for p in [inputs.mlp, inputs.rnn, inputs.transformer].into_iter().flatten() {
                manifest.input(p)?;
            }
            let named: Vec<NamedModel<'_>> = models.iter().map(|(name, model)| NamedModel { name, model }).collect();
            Ok(eval_generalization(&named, setup)?)
        }
        Experiment::Contact => {
            let m = single_model(inputs, "contact", manifest)?;
            Ok(eval_contact(NamedModel { name: "learned", model: &m }, setup)?)
        }
        Experiment::Sine => {
            let m = single_model(inputs, "sine", manifest)?;
            Ok(eval_perturbed_sine(NamedModel { name: "learned", model: &m }, setup)?)
        }
        Experiment::Gap => {
            let m = single_model(inputs, "gap", manifest)?;
            Ok(eval_sim2real_gap(NamedModel { name: "learned", model: &m }, setup)?)
        }
        Experiment::Policy => {
            let (Some(l), Some(i)) = (inputs.learned_policy, inputs.ideal_policy) else {
                return Err(usage("--experiment policy needs --learned-policy and --ideal-policy"));
            };
            manifest.input(l)?;
            manifest.input(i)?;
            Ok(eval_policy_transfer(
                &load_snapshot(l)?,
                &load_snapshot(i)?,
                setup,
                &TransferConfig::default(),
            )?)
        }
    }
}

/// Writes `output` into a staged copy of `out` and publishes it whole.
pub fn publish_experiment(output: &ExperimentOutput, out: &Path) -> Result<()> {
    let staged = StagedDir::new(out)?;
    output.write(staged.path())?;
    staged.publish()?;
    Ok(())
}

pub fn eval(
    seed: u64,
    experiment: Experiment,
    out: &Path,
    config: Option<&Path>,
    inputs: &EvalInputs<'_>,
) -> Result<RunManifest> {
    let mut setup: EvalSetup = files::load(config)?;
    setup.seed = seed;
    let mut manifest = RunManifest::new("eval", seed);
    if let Some(c) = config {
        manifest.input(c)?;
    }
    if let Some(g) = ideal_gain(inputs.gain, &mut manifest, setup.max_force())? {
        setup.ideal_gain = g;
    }
    files::validate_eval(&setup)?;
    manifest.config_hash = files::config_hash(&setup);
    let output = run_experiment(experiment, &setup, inputs, &mut manifest)?;
    publish_experiment(&output, out)?;
    for (k, v) in &output.report.summary {
        println!("{k}={v:.6}");
    }
    manifest.output(out)?;
    Ok(manifest)
}

// ---- validate-config ----

pub fn validate_config(kind: ConfigKind, file: &Path) -> Result<String> {
    let path = Some(file);
    let hash = match kind {
        ConfigKind::Datagen => {
            let f: DatagenFile = files::load(path)?;
            f.validate()?;
            files::config_hash(&f)
        }
        ConfigKind::Train => {
            let f: TrainFile = files::load(path)?;
            f.validate()?;
            files::config_hash(&f)
        }
        ConfigKind::Policy => {
            let f: PolicyFile = files::load(path)?;
            f.validate()?;
            files::config_hash(&f)
        }
        ConfigKind::Eval => {
            let f: EvalSetup = files::load(path)?;
            files::validate_eval(&f)?;
            files::config_hash(&f)
        }
    };
    Ok(hash)
}
