use std::sync::Arc;

use tendonsim_core::config::{PlantConfig, ServoConfig, SimRates, SystemsConfig, FINGER_ID, WEAK_SPRING_ID};
use tendonsim_core::plant::{tendon_kinematics, Plant};
use tendonsim_estimators::network::{Arch, ArchConfig, Net};
use tendonsim_estimators::{EstimatorModel, ModelMeta, Normalizer};
use tendonsim_simforce::{replay_open_loop, ForceSim, SimforceError, SourceSpec};

fn finger() -> PlantConfig {
    SystemsConfig::default().plant(FINGER_ID).unwrap()
}

fn spring() -> PlantConfig {
    SystemsConfig::default().plant(WEAK_SPRING_ID).unwrap()
}

/// Untrained MLP with a zeroed head: always predicts `mean`.
fn constant_model(mean: f64) -> Arc<EstimatorModel> {
    let config = ArchConfig::default_for(Arch::Mlp);
    let net = config.build();
    let mut p = vec![0.0f32; net.param_count()];
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    net.init(&mut rng, &mut p, true);
    let norm = Normalizer {
        output_mean: mean,
        ..Normalizer::identity()
    };
    Arc::new(EstimatorModel::new(config, p, norm, ModelMeta::default()).unwrap())
}

#[test]
fn twenty_substeps_per_tick() {
    assert_eq!(SimRates::default().substeps_per_control_tick(), 20);
    let mut sim = ForceSim::new(spring(), &SourceSpec::Ideal { gain: 10.0 }, SimRates::default(), 21.0).unwrap();
    sim.control_step(1.0).unwrap();
    assert!((sim.plant.state.t - 0.05).abs() < 1e-12);
}

#[test]
fn ideal_source_at_theta_gives_zero_force_and_relaxes() {
    let mut sim = ForceSim::new(finger(), &SourceSpec::Ideal { gain: 30.0 }, SimRates::default(), 21.0).unwrap();
    // Flex the finger first, then command θ_d = θ every tick.
    for _ in 0..20 {
        sim.control_step(3.0).unwrap();
    }
    let flexed = sim.plant.state.q;
    assert!(flexed[0] > 0.1);
    for _ in 0..200 {
        let (theta, _) = sim.observe();
        let rec = sim.control_step(theta).unwrap();
        assert_eq!(rec.force, 0.0);
    }
    let rest = Plant::new(finger()).state.q;
    for j in 0..2 {
        assert!((sim.plant.state.q[j] - rest[j]).abs() < 0.02, "{:?} vs {:?}", sim.plant.state.q, rest);
    }
}

#[test]
fn force_is_held_over_the_tick() {
    let spec = SourceSpec::Ideal { gain: 25.0 };
    let mut sim = ForceSim::new(finger(), &spec, SimRates::default(), 21.0).unwrap();
    let mut manual = Plant::new(finger());
    let dt = SimRates::default().dt_sim();
    for k in 0..40 {
        let theta_d = 0.1 * k as f64;
        let rec = sim.control_step(theta_d).unwrap();
        for _ in 0..20 {
            manual.step(rec.force, &[], dt).unwrap();
        }
        assert_eq!(manual.state, sim.plant.state, "tick {k}");
    }
}

#[test]
fn reported_theta_is_tendon_state_over_radius() {
    let cfg = finger();
    let mut sim = ForceSim::new(cfg.clone(), &SourceSpec::Ideal { gain: 30.0 }, SimRates::default(), 21.0).unwrap();
    for k in 0..30 {
        let state = sim.plant.state.clone();
        let rec = sim.control_step((k as f64 * 0.3).sin() + 1.5).unwrap();
        let (l, ld) = tendon_kinematics(&cfg, state.q, state.qd);
        let r = cfg.spool_radius();
        assert!((rec.theta - l / r).abs() <= 1e-15 * (l / r).abs().max(1.0));
        assert!((rec.theta_dot - ld / r).abs() <= 1e-15 * (ld / r).abs().max(1.0));
    }
}

#[test]
fn learned_forces_are_clamped() {
    for (mean, expected) in [(100.0, 21.0), (-5.0, 0.0), (7.5, 7.5)] {
        let mut sim = ForceSim::new(spring(), &SourceSpec::Learned(constant_model(mean)), SimRates::default(), 21.0).unwrap();
        for _ in 0..5 {
            let rec = sim.control_step(1.0).unwrap();
            assert_eq!(rec.force, expected);
            assert!(rec.force.is_sign_positive());
        }
    }
}

#[test]
fn non_finite_force_names_the_source() {
    let mut model = (*constant_model(1.0)).clone();
    let last = model.params.len() - 1;
    model.params[last] = f32::NAN;
    let mut sim = ForceSim::new(spring(), &SourceSpec::Learned(Arc::new(model)), SimRates::default(), 21.0).unwrap();
    let err = sim.control_step(1.0).unwrap_err();
    assert!(matches!(err, SimforceError::NonFiniteForce { source_kind: "learned", .. }));
    assert!(err.to_string().starts_with("learned"));
}

#[test]
fn window_is_prefilled_and_slides_at_control_rate() {
    let sim = ForceSim::new(finger(), &SourceSpec::Learned(constant_model(1.0)), SimRates::default(), 21.0).unwrap();
    let rows: Vec<_> = sim.source.window().copied().collect();
    assert_eq!(rows.len(), 30);
    assert!(rows.iter().all(|r| *r == rows[0]));
    assert_eq!(rows[0][0], rows[0][1]);

    let mut sim = sim;
    for k in 0..35 {
        sim.control_step(k as f64).unwrap();
    }
    let rows: Vec<_> = sim.source.window().copied().collect();
    assert_eq!(rows.len(), 30);
    let commands: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    assert_eq!(commands, (5..35).map(|k| k as f64).collect::<Vec<_>>());
}

#[test]
fn replay_is_repeatable_and_handles_empty_commands() {
    let commands: Vec<f64> = (0..100).map(|k| 1.5 + (k as f64 * 0.2).sin()).collect();
    let sources = [
        SourceSpec::Ideal { gain: 20.0 },
        SourceSpec::Ideal { gain: 20.0 },
        SourceSpec::Surrogate {
            servo: ServoConfig::default(),
            seed: 3,
        },
        SourceSpec::Surrogate {
            servo: ServoConfig::default(),
            seed: 3,
        },
    ];
    let traces = replay_open_loop(&finger(), &sources, &commands, SimRates::default(), 21.0, &[]).unwrap();
    assert_eq!(traces[0], traces[1]);
    assert_eq!(traces[2], traces[3]);
    assert_eq!(traces[0].len(), 100);
    assert_eq!(traces[0][0].tip, traces[2][0].tip);

    let empty = replay_open_loop(&finger(), &sources, &[], SimRates::default(), 21.0, &[]).unwrap();
    assert!(empty.iter().all(|t| t.is_empty()));
}

#[test]
fn linear_surrogate_matches_ideal_at_servo_rate() {
    // With every nonlinearity removed and servo rate = control rate, the
    // surrogate is the ideal source.
    let rates = SimRates {
        sim_hz: 400,
        data_hz: 20,
        control_hz: 20,
    };
    let commands: Vec<f64> = (0..200).map(|k| 2.0 + 1.5 * (k as f64 * 0.1).sin()).collect();
    let sources = [
        SourceSpec::Ideal { gain: 30.0 },
        SourceSpec::Surrogate {
            servo: ServoConfig::linear(30.0, 21.0),
            seed: 0,
        },
    ];
    let t = replay_open_loop(&finger(), &sources, &commands, rates, 21.0, &[]).unwrap();
    for (a, b) in t[0].iter().zip(&t[1]) {
        assert_eq!(a.force, b.force);
        assert_eq!(a.tip, b.tip);
    }
}

#[test]
fn invalid_setup_is_rejected() {
    assert!(ForceSim::new(spring(), &SourceSpec::Ideal { gain: f64::NAN }, SimRates::default(), 21.0).is_err());
    assert!(ForceSim::new(spring(), &SourceSpec::Ideal { gain: 1.0 }, SimRates::default(), 0.0).is_err());
    let bad = SimRates {
        sim_hz: 400,
        data_hz: 80,
        control_hz: 30,
    };
    assert!(ForceSim::new(spring(), &SourceSpec::Ideal { gain: 1.0 }, bad, 21.0).is_err());
}
