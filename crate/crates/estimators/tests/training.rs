use tendonsim_core::config::{PlantConfig, ServoConfig, SimRates, SpringMassConfig};
use tendonsim_core::datagen::{
    collect_dataset, DatagenConfig, Dataset, Episode, LoadCellConfig, SampleRecord, Split, SystemSpec,
};
use tendonsim_core::trajectory::TrajectoryFamily;
use tendonsim_estimators::network::{Arch, ArchConfig};
use tendonsim_estimators::mlp::MlpConfig;
use tendonsim_estimators::rnn::RnnConfig;
use tendonsim_estimators::train::{train_estimator, TrainConfig};
use tendonsim_estimators::transformer::TransformerConfig;
use tendonsim_estimators::{EstimatorError, HistoryWindow};

fn synthetic(force: impl Fn(f64, f64) -> f64, episodes: usize, len: usize) -> Dataset {
    let episodes = (0..episodes)
        .map(|e| Episode {
            system_id: "synthetic".into(),
            seed: e as u64,
            family: TrajectoryFamily::Sinusoid,
            blocked: false,
            split: if e % 4 == 3 { Split::Validation } else { Split::Train },
            records: (0..len)
                .map(|i| {
                    let t = i as f64 / 80.0;
                    let theta_d = 1.0 + (t * (1.0 + e as f64 * 0.3)).sin();
                    let theta = theta_d * 0.9;
                    SampleRecord {
                        t,
                        theta_d,
                        theta,
                        theta_dot: 0.0,
                        force: force(theta_d, theta),
                        q: [0.0; 2],
                        tip: [0.0; 2],
                    }
                })
                .collect(),
        })
        .collect();
    Dataset {
        episodes,
        config_hash: "synthetic".into(),
    }
}

fn small_configs() -> Vec<ArchConfig> {
    vec![
        ArchConfig::Mlp(MlpConfig {
            history: 30,
            hidden: vec![32, 16],
        }),
        ArchConfig::Rnn(RnnConfig {
            hidden: 16,
            ..RnnConfig::default()
        }),
        ArchConfig::Transformer(TransformerConfig {
            head_hidden: vec![16],
            ..TransformerConfig::default()
        }),
    ]
}

#[test]
fn constant_force_is_learned() {
    let ds = synthetic(|_, _| 6.5, 8, 400);
    for arch in small_configs() {
        let cfg = TrainConfig {
            epochs: 15,
            batch_size: 64,
            seed: 2,
            ..TrainConfig::default()
        };
        let out = train_estimator(&ds, &arch, &cfg).unwrap();
        let rmse = out.model.meta.best_val_rmse;
        assert!(rmse < 0.01, "{:?}: {rmse}", arch.arch());
    }
}

#[test]
fn linear_servo_on_spring_is_learned_by_mlp() {
    let kp = 12.0;
    let system = |id: &str, k: f64| SystemSpec {
        id: id.into(),
        plant: PlantConfig::SpringMass(SpringMassConfig {
            stiffness: k,
            ..SpringMassConfig::default()
        }),
        servo: ServoConfig::linear(kp, 21.0),
        share: 1.0,
    };
    // collect_dataset wants a finger and two springs; the finger share is tiny.
    let mut systems = vec![system("weak_spring", 50.0), system("strong_spring", 100.0)];
    systems.insert(
        0,
        SystemSpec {
            id: "finger".into(),
            plant: PlantConfig::Finger(Default::default()),
            servo: ServoConfig::linear(kp, 21.0),
            share: 0.0,
        },
    );
    let cfg = DatagenConfig {
        total_minutes: 12.0,
        episode_seconds: 30.0,
        load_cell: LoadCellConfig {
            rate_hz: 80,
            noise_std: 0.0,
            ..LoadCellConfig::default()
        },
        ..DatagenConfig::default()
    };
    let ds = collect_dataset(&systems, &cfg, SimRates::default(), 5).unwrap();
    let train = TrainConfig {
        epochs: 60,
        batch_size: 64,
        seed: 1,
        ..TrainConfig::default()
    };
    let arch = ArchConfig::Mlp(MlpConfig::default());
    let out = train_estimator(&ds, &arch, &train).unwrap();
    assert!(out.model.meta.best_val_rmse < 0.1, "rmse {}", out.model.meta.best_val_rmse);

    // Oracle: the linear servo's force is kp·(θ_d − θ) clamped to the range.
    let ep = ds.split(Split::Validation).next().unwrap();
    let i = ep.records.len() / 2;
    let r = &ep.records[i];
    let oracle = (kp * (r.theta_d - r.theta)).clamp(0.0, 21.0);
    assert!((r.force - oracle).abs() < 1e-9);
    let w = tendonsim_estimators::window_from_log(&ep.records, i, 30, 4);
    assert!((out.model.predict(&w) - oracle).abs() < 0.3);
}

#[test]
fn scaling_forces_scales_predictions_exactly() {
    let base = synthetic(|d, t| 3.0 + 4.0 * d - 2.0 * t, 8, 300);
    let mut scaled = base.clone();
    for ep in &mut scaled.episodes {
        for r in &mut ep.records {
            r.force *= 2.0;
        }
    }
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 32,
        seed: 11,
        ..TrainConfig::default()
    };
    for arch in small_configs() {
        let a = train_estimator(&base, &arch, &cfg).unwrap().model;
        let b = train_estimator(&scaled, &arch, &cfg).unwrap().model;
        assert_eq!(a.params, b.params);
        let ep = &base.episodes[0].records;
        for i in (0..ep.len()).step_by(37) {
            let w = tendonsim_estimators::window_from_log(ep, i, 30, 4);
            assert_eq!(b.predict(&w), 2.0 * a.predict(&w));
        }
    }
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let ds = synthetic(|d, t| 1.0 + d * d - t, 8, 300);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 64,
        seed: 4,
        ..TrainConfig::default()
    };
    for arch in small_configs() {
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| train_estimator(&ds, &arch, &cfg).unwrap())
        };
        let a = run(1);
        let b = run(1);
        let c = run(3);
        assert_eq!(a.final_loss.to_bits(), b.final_loss.to_bits());
        assert_eq!(a.final_loss.to_bits(), c.final_loss.to_bits());
        assert_eq!(a.model.params, c.model.params);
    }
}

#[test]
fn non_finite_targets_abort_with_diagnostics() {
    let mut ds = synthetic(|_, _| 1.0, 4, 200);
    ds.episodes[0].records[10].force = f64::NAN;
    let err = train_estimator(&ds, &ArchConfig::default_for(Arch::Mlp), &TrainConfig::default()).unwrap_err();
    match err {
        EstimatorError::NonFiniteLoss { epoch, param_norm, .. } => {
            assert_eq!(epoch, 0);
            assert!(param_norm.is_finite());
        }
        // NaN also poisons normalization statistics.
        e => panic!("unexpected error {e}"),
    }
}

#[test]
fn invalid_config_is_rejected() {
    let ds = synthetic(|_, _| 1.0, 4, 100);
    let cfg = TrainConfig {
        batch_size: 0,
        ..TrainConfig::default()
    };
    assert!(matches!(
        train_estimator(&ds, &ArchConfig::default_for(Arch::Rnn), &cfg),
        Err(EstimatorError::InvalidConfig { .. })
    ));
    let _ = HistoryWindow { values: vec![] };
}
