use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tendonsim_core::config::FingerConfig;
use tendonsim_rl::ppo::{ppo_update, PpoLearner, RolloutBuffer};
use tendonsim_rl::{gae, train_policy, Policy, PolicyConfig, PolicySnapshot, PolicySource, PolicyTraining, PpoConfig, RlError};

fn small_policy() -> PolicyConfig {
    PolicyConfig {
        hidden: vec![16, 16],
        value_hidden: vec![16, 16],
        fixed_std: 0.05,
    }
}

fn small_training(seed: u64, updates: usize) -> PolicyTraining<'static> {
    let mut t = PolicyTraining::new(PolicySource::Ideal { gain: 16.0 }, FingerConfig::default(), seed);
    t.policy = small_policy();
    t.env.history = 4;
    t.env.episode_seconds = 2.0;
    t.ppo.num_envs = 3;
    t.ppo.horizon = 16;
    t.ppo.minibatches = 2;
    t.ppo.total_updates = updates;
    t.ppo.eval_every = 2;
    t.ppo.eval_alphas = vec![0.5, 1.2];
    t
}

#[test]
fn gae_unit_lambda_and_gamma_gives_returns_minus_values() {
    let rewards = [1.0, -0.5, 2.0, 0.25, -1.0];
    let values = [0.3, 0.1, -0.2, 0.7, 0.4];
    let next: Vec<f64> = values[1..].iter().copied().chain([0.0]).collect();
    let terminal = [false, false, false, false, true];
    let adv = gae(&rewards, &values, &next, &terminal, &terminal, 1.0, 1.0);
    let mut ret = 0.0;
    for t in (0..5).rev() {
        ret += rewards[t];
        assert!((adv[t] - (ret - values[t])).abs() < 1e-12);
    }
}

#[test]
fn truncated_episodes_bootstrap_without_chaining() {
    // Step 1 ends by time limit with a final-state value of 2.0.
    let rewards = [1.0, 1.0, 1.0];
    let values = [0.0, 0.0, 0.0];
    let next = [0.0, 2.0, 5.0];
    let ends = [false, true, false];
    let adv = gae(&rewards, &values, &next, &[false; 3], &ends, 0.5, 1.0);
    assert_eq!(adv[2], 1.0 + 0.5 * 5.0);
    assert_eq!(adv[1], 1.0 + 0.5 * 2.0);
    assert_eq!(adv[0], 1.0 + 0.5 * adv[1]);
}

proptest! {
    #[test]
    fn gae_matches_direct_sum(
        data in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64), 1..30),
        gamma in 0.0..0.999f64,
        lambda in 0.0..1.0f64,
    ) {
        let rewards: Vec<f64> = data.iter().map(|d| d.0).collect();
        let values: Vec<f64> = data.iter().map(|d| d.1).collect();
        let n = data.len();
        let next: Vec<f64> = (0..n).map(|t| if t + 1 < n { values[t + 1] } else { 0.7 }).collect();
        let flags = vec![false; n];
        let adv = gae(&rewards, &values, &next, &flags, &flags, gamma, lambda);
        for t in 0..n {
            let mut direct = 0.0;
            for l in 0..n - t {
                let delta = rewards[t + l] + gamma * next[t + l] - values[t + l];
                direct += (gamma * lambda).powi(l as i32) * delta;
            }
            prop_assert!((adv[t] - direct).abs() < 1e-9);
        }
    }
}

#[test]
fn zero_advantages_leave_the_mean_network_unchanged() {
    let mut policy = Policy::new(small_policy(), 2);
    policy.init(&mut ChaCha8Rng::seed_from_u64(1));
    let before = policy.mean_params.clone();
    let value_before = policy.value_params.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 40;
    let buf = RolloutBuffer {
        obs: (0..n).map(|i| (0..10).map(|j| ((i * 7 + j) % 5) as f32 * 0.1).collect()).collect(),
        actions: (0..n).map(|i| (i as f64 * 0.37).sin() * 0.1).collect(),
        log_probs: vec![0.5; n],
        advantages: vec![0.0; n],
        returns: vec![1.0; n],
    };
    let mut learner = PpoLearner::new(&policy);
    let cfg = PpoConfig {
        minibatches: 4,
        ..PpoConfig::default()
    };
    ppo_update(&mut policy, &mut learner, &buf, &cfg, &mut rng);
    assert_eq!(policy.mean_params, before);
    assert_ne!(policy.value_params, value_before);
}

#[test]
fn log_std_is_identical_in_every_checkpoint() {
    let out = train_policy(small_training(9, 8)).unwrap();
    assert_eq!(out.checkpoints.len(), 4);
    let expected = 0.05f64.ln().to_bits();
    for snap in &out.checkpoints {
        let c = snap.to_container();
        assert_eq!(c.extras.len(), 1);
        assert_eq!(c.extras[0].to_bits(), expected);
        let bytes = c.to_bytes();
        let reread = PolicySnapshot::from_container(
            tendonsim_estimators::checkpoint::Container::from_bytes(&bytes, std::path::Path::new("mem")).unwrap(),
        )
        .unwrap();
        assert_eq!(reread.policy.log_std().to_bits(), expected);
    }
    // The mean network did move, so the freeze is not an artifact of no training.
    assert_ne!(out.checkpoints[0].policy.mean_params, out.checkpoints[3].policy.mean_params);
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| train_policy(small_training(4, 4)).unwrap())
    };
    let a = run(1);
    let b = run(3);
    let curve = |o: &tendonsim_rl::ppo::PolicyTrainOutcome| {
        o.stats.iter().map(|s| (s.mean_step_reward.to_bits(), s.value_loss.to_bits())).collect::<Vec<_>>()
    };
    assert_eq!(curve(&a), curve(&b));
    assert_eq!(a.best.to_container().to_bytes(), b.best.to_container().to_bytes());
}

#[test]
fn best_snapshot_has_highest_evaluation_return() {
    let out = train_policy(small_training(5, 6)).unwrap();
    let top = out.checkpoints.iter().map(|c| c.meta.eval_return).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(out.best.meta.eval_return, top);
    assert_eq!(out.best.meta.source, "ideal");
    let evaluated: Vec<usize> = out.stats.iter().filter(|s| s.eval_return.is_some()).map(|s| s.update).collect();
    assert_eq!(evaluated, vec![1, 3, 5]);
}

#[test]
fn exploding_value_loss_aborts_with_trace() {
    let mut t = small_training(1, 5);
    t.ppo.divergence_value_loss = 1e-12;
    match train_policy(t) {
        Err(RlError::Diverged { update, trace, .. }) => {
            assert_eq!(update, 0);
            assert_eq!(trace.len(), 1);
        }
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("expected divergence"),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let mut t = small_training(1, 1);
    t.ppo.gamma = 1.0;
    assert!(matches!(train_policy(t), Err(RlError::InvalidConfig { .. })));
    let mut t = small_training(1, 1);
    t.ppo.clip_ratio = 0.0;
    assert!(matches!(train_policy(t), Err(RlError::InvalidConfig { .. })));
    let mut t = small_training(1, 1);
    t.env.action_limit = -1.0;
    assert!(matches!(train_policy(t), Err(RlError::InvalidConfig { .. })));
}

#[test]
fn smoke_run_improves_return() {
    let mut t = PolicyTraining::new(PolicySource::Ideal { gain: 16.0 }, FingerConfig::default(), 3);
    t.ppo.num_envs = 8;
    t.ppo.total_updates = 50;
    t.ppo.eval_every = 10;
    let out = train_policy(t).unwrap();
    let first = out.stats[0].mean_step_reward;
    let late: f64 = out.stats[45..].iter().map(|s| s.mean_step_reward).sum::<f64>() / 5.0;
    assert!(late > first, "step reward {first} -> {late}");
}

#[test]
fn snapshot_file_round_trip_and_corruption() {
    let out = train_policy(small_training(2, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.bin");
    out.best.save(&path).unwrap();
    let back = PolicySnapshot::load(&path).unwrap();
    assert_eq!(back.policy.mean_params, out.best.policy.mean_params);
    assert_eq!(back.policy.value_params, out.best.policy.value_params);
    assert_eq!(back.env, out.best.env);
    assert_eq!(back.meta, out.best.meta);
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
    assert!(PolicySnapshot::load(&path).is_err());
}
