#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tendonsim_estimators::mlp::MlpConfig;
use tendonsim_estimators::rnn::{Cell, RnnConfig};
use tendonsim_estimators::{ArchConfig, EstimatorModel, ModelMeta, Net, Normalizer};
use tendonsim_eval::EvalSetup;

/// Untrained model with inputs scaled to the command range and outputs to newtons.
pub fn random_model(config: ArchConfig, seed: u64) -> EstimatorModel {
    let net = config.build();
    let mut params = vec![0.0f32; net.layout().total()];
    net.init(&mut ChaCha8Rng::seed_from_u64(seed), &mut params, false);
    let normalizer = Normalizer {
        input_mean: [1.5, 1.5, 0.0],
        input_std: [1.0, 1.0, 2.0],
        output_mean: 5.0,
        output_std: 3.0,
    };
    EstimatorModel::new(config, params, normalizer, ModelMeta::default()).unwrap()
}

pub fn small_mlp(seed: u64) -> EstimatorModel {
    random_model(
        ArchConfig::Mlp(MlpConfig {
            history: 8,
            hidden: vec![8],
        }),
        seed,
    )
}

pub fn small_rnn(seed: u64) -> EstimatorModel {
    random_model(
        ArchConfig::Rnn(RnnConfig {
            history: 8,
            hidden: 6,
            cell: Cell::Gru,
        }),
        seed,
    )
}

/// Shortened protocol so the tests stay fast.
pub fn quick_setup() -> EvalSetup {
    let mut s = EvalSetup {
        ideal_gain: 16.0,
        seed: 5,
        ..EvalSetup::default()
    };
    s.step_holds = vec![0.5, 1.0];
    s.ramp_cycles = 1;
    s.perturbed_sine.duration = 8.0;
    s.gap_sine.duration = 4.0;
    s
}
