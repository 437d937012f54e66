//! Open-loop sim-to-real gap: the same command replayed through the surrogate
//! and through force-driven simulations.

use tendonsim_core::config::PlantConfig;
use tendonsim_core::datagen::derive_seed;
use tendonsim_core::metrics::rmse_2d;
use tendonsim_simforce::{replay_open_loop, SourceSpec};

use crate::error::Result;
use crate::force::{model_hash, NamedModel};
use crate::report::{condition_metrics, ExperimentOutput, MetricReport, Trace};
use crate::setup::EvalSetup;

fn tips(trace: &[tendonsim_simforce::TickRecord]) -> Vec<[f64; 2]> {
    trace.iter().map(|r| [r.tip.0 * 1e3, r.tip.1 * 1e3]).collect()
}

pub fn eval_sim2real_gap(model: NamedModel<'_>, setup: &EvalSetup) -> Result<ExperimentOutput> {
    setup.validate()?;
    let sine = setup.gap_sine;
    let commands = sine.trajectory().sample(sine.duration, setup.rates.control_hz as f64);
    let sources = [
        SourceSpec::Surrogate {
            servo: setup.servo.clone(),
            seed: derive_seed(setup.seed, 0x6A9, 0),
        },
        SourceSpec::Learned(std::sync::Arc::new(model.model.clone())),
        SourceSpec::Ideal { gain: setup.ideal_gain },
    ];
    let runs = replay_open_loop(
        &PlantConfig::Finger(setup.finger()),
        &sources,
        &commands,
        setup.rates,
        setup.max_force(),
        &[],
    )?;
    let real = tips(&runs[0]);
    let learned = tips(&runs[1]);
    let ideal = tips(&runs[2]);

    let mut report = MetricReport::new("gap", "mm");
    let mut trace = Trace::new(
        "gap_sine",
        &[
            "t", "theta_d", "real_x", "real_y", "learned_x", "learned_y", "ideal_x", "ideal_y", "force_real",
            "force_learned", "force_ideal",
        ],
    );
    for k in 0..commands.len() {
        trace.push(vec![
            runs[0][k].t,
            commands[k],
            real[k][0],
            real[k][1],
            learned[k][0],
            learned[k][1],
            ideal[k][0],
            ideal[k][1],
            runs[0][k].force,
            runs[1][k].force,
            runs[2][k].force,
        ]);
    }
    // Per-sample Euclidean distance against zero gives the 2-D RMSE.
    let dist = |a: &[[f64; 2]], b: &[[f64; 2]]| -> Vec<f64> {
        a.iter()
            .zip(b)
            .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
            .collect()
    };
    let zeros = vec![0.0; commands.len()];
    for (subject, sim) in [(model.name, &learned), ("ideal", &ideal)] {
        let d = dist(sim, &real);
        let cm = condition_metrics(subject, "sine_replay", &d, &zeros, &trace.name)?;
        debug_assert!((cm.rmse - rmse_2d(sim, &real)).abs() < 1e-9);
        report.conditions.push(cm);
    }
    let rl = report.conditions[0].rmse;
    let ri = report.conditions[1].rmse;
    report.summary.insert("rmse_mm/learned".into(), rl);
    report.summary.insert("rmse_mm/ideal".into(), ri);
    report.summary.insert("improvement".into(), 1.0 - rl / ri);
    report.summary.insert("self_rmse_mm".into(), rmse_2d(&real, &real));
    report.hashes.insert(format!("model/{}", model.name), model_hash(model.model));
    Ok(ExperimentOutput {
        report,
        traces: vec![trace],
    })
}
