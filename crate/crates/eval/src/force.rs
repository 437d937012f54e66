//! Force-prediction experiments: step-suite generalization, contact, and the
//! perturbed sinusoid.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tendonsim_core::config::FINGER_ID;
use tendonsim_core::datagen::{derive_seed, simulate_episode, SampleRecord};
use tendonsim_core::metrics::{cross_correlation_lag, rmse};
use tendonsim_core::plant::Obstacle;
use tendonsim_core::trajectory::{step_suite, Trajectory};
use tendonsim_estimators::window::observation;
use tendonsim_estimators::{window_from_log, EstimatorModel, InferenceScratch, STRIDE};

use crate::error::{EvalError, Result};
use crate::report::{bytes_hash, condition_metrics, ExperimentOutput, MetricReport, Trace};
use crate::setup::EvalSetup;

/// A named estimator under evaluation.
#[derive(Clone, Copy)]
pub struct NamedModel<'a> {
    pub name: &'a str,
    pub model: &'a EstimatorModel,
}

pub fn model_hash(model: &EstimatorModel) -> String {
    bytes_hash(&model.to_container().to_bytes())
}

/// Windowed predictions at `indices`, clamped to the force range.
pub fn predict_windowed(model: &EstimatorModel, records: &[SampleRecord], indices: &[usize], max_force: f64) -> Vec<f64> {
    let mut scratch = InferenceScratch::default();
    indices
        .iter()
        .map(|&i| {
            let w = window_from_log(records, i, model.history(), STRIDE);
            model.predict_values(&w.values, &mut scratch).clamp(0.0, max_force)
        })
        .collect()
}

/// Recurrent predictions with the state carried across the whole trace, one
/// row per index. `None` for non-recurrent models.
pub fn predict_streaming(model: &EstimatorModel, records: &[SampleRecord], indices: &[usize], max_force: f64) -> Option<Vec<f64>> {
    let mut stream = model.stream()?;
    Some(
        indices
            .iter()
            .map(|&i| stream.step(observation(&records[i])).clamp(0.0, max_force))
            .collect(),
    )
}

pub fn predict_ideal(records: &[SampleRecord], indices: &[usize], gain: f64, max_force: f64) -> Vec<f64> {
    indices
        .iter()
        .map(|&i| (gain * (records[i].theta_d - records[i].theta)).clamp(0.0, max_force))
        .collect()
}

fn truth_at(records: &[SampleRecord], indices: &[usize]) -> Vec<f64> {
    indices.iter().map(|&i| records[i].force).collect()
}

fn check_models(models: &[NamedModel<'_>]) -> Result<()> {
    if models.is_empty() {
        return Err(EvalError::InvalidInput("no models to evaluate".into()));
    }
    for (i, m) in models.iter().enumerate() {
        if models[..i].iter().any(|o| o.name == m.name) {
            return Err(EvalError::InvalidInput(format!("duplicate model name `{}`", m.name)));
        }
    }
    Ok(())
}

pub const GENERALIZATION_SYSTEMS: [&str; 3] = ["weak_spring", "strong_spring", FINGER_ID];

/// Step suite on each system; recurrent models keep their state across the
/// whole suite. Predictions are compared at the 20 Hz window rate.
pub fn eval_generalization(models: &[NamedModel<'_>], setup: &EvalSetup) -> Result<ExperimentOutput> {
    setup.validate()?;
    check_models(models)?;
    let max_force = setup.max_force();
    let (traj, segments) = step_suite(&setup.step_targets, &setup.step_holds);
    let duration = segments.last().map_or(0.0, |s| s.2);
    let mut report = MetricReport::new("generalization", "N");
    let mut traces = Vec::new();
    let mut per_model: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (s_idx, system_id) in GENERALIZATION_SYSTEMS.iter().enumerate() {
        let system = setup.system(system_id)?;
        let seed = derive_seed(setup.seed, 0x6E4, s_idx as u64);
        let records = simulate_episode(&system, &traj, duration, &[], setup.rates, &setup.load_cell, seed)?;
        let indices: Vec<usize> = (0..records.len()).step_by(STRIDE).collect();
        let truth = truth_at(&records, &indices);
        let trace_name = format!("steps_{system_id}");
        let mut columns = vec!["t".to_string(), "theta_d".into(), "theta".into(), "force_true".into()];
        let mut preds = Vec::new();
        for m in models {
            let p = predict_streaming(m.model, &records, &indices, max_force)
                .unwrap_or_else(|| predict_windowed(m.model, &records, &indices, max_force));
            report.conditions.push(condition_metrics(m.name, system_id, &p, &truth, &trace_name)?);
            // Per hold-length segments of the suite.
            let mut seg_rmse = Vec::new();
            for &(hold, start, end) in &segments {
                let sel: Vec<usize> = (0..indices.len())
                    .filter(|&k| records[indices[k]].t >= start && records[indices[k]].t < end)
                    .collect();
                let sp: Vec<f64> = sel.iter().map(|&k| p[k]).collect();
                let st: Vec<f64> = sel.iter().map(|&k| truth[k]).collect();
                let cond = format!("{system_id}/hold_{hold}s");
                let cm = condition_metrics(m.name, &cond, &sp, &st, &trace_name)?;
                seg_rmse.push(cm.rmse);
                report.conditions.push(cm);
            }
            let entry = per_model.entry(m.name).or_default();
            entry.0.push(rmse(&p, &truth));
            entry.1.push(seg_rmse.last().unwrap() - seg_rmse[0]);
            columns.push(format!("pred_{}", m.name));
            preds.push(p);
        }
        let mut trace = Trace {
            name: trace_name,
            columns,
            rows: Vec::with_capacity(indices.len()),
        };
        for (k, &i) in indices.iter().enumerate() {
            let r = &records[i];
            let mut row = vec![r.t, r.theta_d, r.theta, truth[k]];
            row.extend(preds.iter().map(|p| p[k]));
            trace.push(row);
        }
        traces.push(trace);
    }
    for (name, (rmses, drifts)) in &per_model {
        let mean = rmses.iter().sum::<f64>() / rmses.len() as f64;
        report.summary.insert(format!("mean_rmse/{name}"), mean);
        report.summary.insert(format!("mean_rmse_pct_max_force/{name}"), 100.0 * mean / max_force);
        report
            .summary
            .insert(format!("hold_drift/{name}"), drifts.iter().sum::<f64>() / drifts.len() as f64);
    }
    for m in models {
        report.hashes.insert(format!("model/{}", m.name), model_hash(m.model));
    }
    Ok(ExperimentOutput { report, traces })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Blocking {
    None,
    Half,
    Full,
}

impl Blocking {
    pub const ALL: [Blocking; 3] = [Blocking::None, Blocking::Half, Blocking::Full];

    pub fn name(self) -> &'static str {
        match self {
            Blocking::None => "none",
            Blocking::Half => "half",
            Blocking::Full => "full",
        }
    }

    /// A stop in front of the whole finger for the whole run.
    pub fn obstacles(self, setup: &EvalSetup) -> Vec<Obstacle> {
        let always = (0.0, f64::INFINITY);
        match self {
            Blocking::None => Vec::new(),
            Blocking::Half => Obstacle::both_joints(setup.half_block_angle, always).to_vec(),
            Blocking::Full => Obstacle::both_joints(0.0, always).to_vec(),
        }
    }
}

fn ramp_trajectory(setup: &EvalSetup) -> (Trajectory, f64) {
    let leg = setup.ramp_peak / setup.ramp_slope;
    let mut segments = Vec::new();
    for c in 0..setup.ramp_cycles {
        let t = 2.0 * leg * c as f64;
        segments.push((t, 0.0, setup.ramp_slope));
        segments.push((t + leg, setup.ramp_peak, -setup.ramp_slope));
    }
    (Trajectory::Ramps(segments), 2.0 * leg * setup.ramp_cycles as f64)
}

fn learned_vs_ideal_trace(name: String, records: &[SampleRecord], learned: &[f64], ideal: &[f64]) -> Trace {
    let mut trace = Trace::new(name, &["t", "theta_d", "theta", "force_true", "pred_learned", "pred_ideal"]);
    for (k, r) in records.iter().enumerate() {
        trace.push(vec![r.t, r.theta_d, r.theta, r.force, learned[k], ideal[k]]);
    }
    trace
}

/// Ramps on the finger with no, half-way, and immediate blocking. The learned
/// model and the ideal baseline are scored on every data-rate record.
pub fn eval_contact(model: NamedModel<'_>, setup: &EvalSetup) -> Result<ExperimentOutput> {
    setup.validate()?;
    let max_force = setup.max_force();
    let system = setup.system(FINGER_ID)?;
    let (traj, duration) = ramp_trajectory(setup);
    let mut report = MetricReport::new("contact", "N");
    let mut traces = Vec::new();
    for (c_idx, mode) in Blocking::ALL.into_iter().enumerate() {
        let seed = derive_seed(setup.seed, 0xC0, c_idx as u64);
        let records = simulate_episode(&system, &traj, duration, &mode.obstacles(setup), setup.rates, &setup.load_cell, seed)?;
        let indices: Vec<usize> = (0..records.len()).collect();
        let truth = truth_at(&records, &indices);
        let learned = predict_windowed(model.model, &records, &indices, max_force);
        let ideal = predict_ideal(&records, &indices, setup.ideal_gain, max_force);
        let trace = learned_vs_ideal_trace(format!("contact_{}", mode.name()), &records, &learned, &ideal);
        let l = condition_metrics(model.name, mode.name(), &learned, &truth, &trace.name)?;
        let i = condition_metrics("ideal", mode.name(), &ideal, &truth, &trace.name)?;
        report
            .summary
            .insert(format!("learned_over_ideal/{}", mode.name()), l.rmse / i.rmse);
        report.summary.insert(
            format!("theta_range/{}", mode.name()),
            records.iter().map(|r| r.theta).fold(f64::MIN, f64::max) - records.iter().map(|r| r.theta).fold(f64::MAX, f64::min),
        );
        report.conditions.extend([l, i]);
        traces.push(trace);
    }
    report.hashes.insert(format!("model/{}", model.name), model_hash(model.model));
    Ok(ExperimentOutput { report, traces })
}

/// Seeded stand-in for hand perturbations: stops in front of the whole finger
/// switched on and off at random times.
pub fn perturbation_schedule(seed: u64, duration: f64) -> Vec<Obstacle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stops = Vec::new();
    let mut t = rng.random_range(0.5..2.0);
    while t < duration {
        let hold = rng.random_range(0.4..1.5);
        let angle = rng.random_range(0.2..1.2);
        stops.extend(Obstacle::both_joints(angle, (t, t + hold)));
        t += hold + rng.random_range(1.0..3.0);
    }
    stops
}

/// Sinusoid on the finger with random contacts. Besides RMSE, reports the
/// cross-correlation lag of each prediction against the measured force
/// (positive: the prediction leads).
pub fn eval_perturbed_sine(model: NamedModel<'_>, setup: &EvalSetup) -> Result<ExperimentOutput> {
    setup.validate()?;
    let max_force = setup.max_force();
    let system = setup.system(FINGER_ID)?;
    let sine = setup.perturbed_sine;
    let obstacles = perturbation_schedule(derive_seed(setup.seed, 0x51E, 1), sine.duration);
    let records = simulate_episode(
        &system,
        &sine.trajectory(),
        sine.duration,
        &obstacles,
        setup.rates,
        &setup.load_cell,
        derive_seed(setup.seed, 0x51E, 0),
    )?;
    let indices: Vec<usize> = (0..records.len()).collect();
    let truth = truth_at(&records, &indices);
    let learned = predict_windowed(model.model, &records, &indices, max_force);
    let ideal = predict_ideal(&records, &indices, setup.ideal_gain, max_force);
    let trace = learned_vs_ideal_trace("perturbed_sine".into(), &records, &learned, &ideal);
    let mut report = MetricReport::new("sine", "N");
    report
        .conditions
        .push(condition_metrics(model.name, "perturbed_sine", &learned, &truth, &trace.name)?);
    report
        .conditions
        .push(condition_metrics("ideal", "perturbed_sine", &ideal, &truth, &trace.name)?);
    let max_lag = (setup.max_lag_s * setup.rates.data_hz as f64).round() as usize;
    let dt = setup.rates.dt_data();
    for (key, pred) in [("learned", &learned), ("ideal", &ideal)] {
        let lag = cross_correlation_lag(&truth, pred, max_lag);
        report.summary.insert(format!("lag_samples/{key}"), lag as f64);
        report.summary.insert(format!("lag_s/{key}"), lag as f64 * dt);
    }
    report.summary.insert("perturbations".into(), (obstacles.len() / 2) as f64);
    report.hashes.insert(format!("model/{}", model.name), model_hash(model.model));
    Ok(ExperimentOutput {
        report,
        traces: vec![trace],
    })
}
