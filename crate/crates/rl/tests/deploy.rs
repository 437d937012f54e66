use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tendonsim_core::config::{FingerConfig, SimRates};
use tendonsim_rl::{
    deploy_metrics, deploy_policy, AlphaSchedule, DeployConfig, EnvConfig, Phase, Policy, PolicyConfig, PolicySnapshot,
    SnapshotMeta,
};

fn snapshot() -> PolicySnapshot {
    let env = EnvConfig {
        history: 6,
        ..EnvConfig::default()
    };
    let mut policy = Policy::new(
        PolicyConfig {
            hidden: vec![12],
            value_hidden: vec![12],
            fixed_std: 0.05,
        },
        env.history,
    );
    policy.init(&mut ChaCha8Rng::seed_from_u64(8));
    // Make the untrained policy act visibly.
    let n = policy.mean_params.len();
    policy.mean_params[n - 1] = 0.3;
    PolicySnapshot {
        policy,
        env,
        meta: SnapshotMeta::default(),
    }
}

fn config(dwell: f64) -> DeployConfig {
    DeployConfig {
        schedule: AlphaSchedule::stairs(dwell),
        ..DeployConfig::default()
    }
}

#[test]
fn stairs_levels_step_by_tenth_pi_up_then_down() {
    let s = AlphaSchedule::stairs(1.0);
    let alphas: Vec<f64> = s.levels.iter().map(|l| l.0).collect();
    let expected: Vec<f64> = [0, 1, 2, 3, 4, 5, 4, 3, 2, 1, 0].iter().map(|&k| k as f64 * PI / 10.0).collect();
    assert_eq!(alphas, expected);
    assert!(s.levels[..6].iter().all(|l| l.1 == Phase::Up));
    assert!(s.levels[6..].iter().all(|l| l.1 == Phase::Down));
}

#[test]
fn log_length_is_dwell_times_steps_times_rate() {
    let cfg = config(0.5);
    let log = deploy_policy(&snapshot(), &FingerConfig::default(), &cfg).unwrap();
    assert_eq!(log.len(), (0.5 * 11.0 * 20.0) as usize);
    assert_eq!(log.len(), cfg.schedule.total_steps(SimRates::default()));
    assert!(log.iter().all(|r| r.action.abs() <= 0.5));
    assert!(log.iter().any(|r| r.phase == Phase::Down));
}

#[test]
fn deployment_is_reproducible() {
    let snap = snapshot();
    let cfg = config(0.4);
    let a = deploy_policy(&snap, &FingerConfig::default(), &cfg).unwrap();
    let b = deploy_policy(&snap, &FingerConfig::default(), &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn metrics_match_two_pass_reference() {
    let cfg = config(0.6);
    let log = deploy_policy(&snapshot(), &FingerConfig::default(), &cfg).unwrap();
    let m = deploy_metrics(&log, cfg.rates, 0.25);
    let naive = |rows: Vec<f64>| {
        let mean_sq = rows.iter().map(|e| e * e).sum::<f64>() / rows.len() as f64;
        mean_sq.sqrt()
    };
    let errs = |p: Option<Phase>| log.iter().filter(|r| p.is_none_or(|p| r.phase == p)).map(|r| r.error).collect();
    assert!((m.rmse - naive(errs(None))).abs() < 1e-12);
    assert!((m.rmse_up - naive(errs(Some(Phase::Up)))).abs() < 1e-12);
    assert!((m.rmse_down - naive(errs(Some(Phase::Down)))).abs() < 1e-12);
    let mut opening = 0.0f64;
    for r in &log {
        if r.phase == Phase::Down && r.since_change >= 5 {
            opening = opening.max(r.error);
        }
    }
    assert_eq!(m.opening_max_error, opening);
    for r in &log {
        let e = ((r.goal_x - r.tip_x).powi(2) + (r.goal_y - r.tip_y).powi(2)).sqrt();
        assert!((r.error - e).abs() < 1e-15);
    }
}
