use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tendonsim_estimators::network::{Arch, ArchConfig, Net, Network, NetworkCache};
use tendonsim_estimators::rnn::{Cell, RnnConfig, RnnStream};
use tendonsim_estimators::transformer::positional_encoding;
use tendonsim_estimators::{EstimatorModel, ModelMeta, Normalizer, CHANNELS, HISTORY};

fn init<S: tendonsim_estimators::scalar::Scalar>(net: &Network, seed: u64) -> Vec<S> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = vec![S::ZERO; net.layout().total()];
    net.init(&mut rng, &mut p, false);
    p
}

fn random_window(rng: &mut ChaCha8Rng, rows: usize) -> Vec<f64> {
    (0..rows * CHANNELS).map(|_| rng.random_range(-2.0..2.0)).collect()
}

#[test]
fn transformer_is_causal() {
    let net = ArchConfig::default_for(Arch::Transformer).build();
    let p: Vec<f64> = init(&net, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut cache = NetworkCache::default();
    for pos in [0, 5, 17, HISTORY - 2] {
        let x = random_window(&mut rng, HISTORY);
        let base = net.forward_at(&p, &x, pos, &mut cache).unwrap();
        for row in pos + 1..HISTORY {
            let mut y = x.clone();
            for c in 0..CHANNELS {
                y[row * CHANNELS + c] += 10.0;
            }
            let out = net.forward_at(&p, &y, pos, &mut cache).unwrap();
            assert_eq!(out.to_bits(), base.to_bits(), "pos {pos}, perturbed row {row}");
        }
        let mut y = x.clone();
        y[0] += 0.5;
        let out = net.forward_at(&p, &y, pos, &mut cache).unwrap();
        assert_ne!(out, base, "row 0 must influence position {pos}");
    }
    // The full forward is the last position.
    let x = random_window(&mut rng, HISTORY);
    let full = net.forward(&p, &x, &mut cache);
    let at = net.forward_at(&p, &x, HISTORY - 1, &mut cache).unwrap();
    assert_eq!(full.to_bits(), at.to_bits());
}

#[test]
fn rnn_streaming_matches_full_window() {
    for cell in [Cell::Gru, Cell::Vanilla] {
        let cfg = RnnConfig { cell, ..RnnConfig::default() };
        let net = ArchConfig::Rnn(cfg.clone()).build();
        let Network::Rnn(rnn) = &net else { unreachable!() };
        let p: Vec<f64> = init(&net, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut cache = NetworkCache::default();
        let mut stream = RnnStream::new(cfg.hidden);
        for _ in 0..1000 {
            let x = random_window(&mut rng, HISTORY);
            let full = net.forward(&p, &x, &mut cache);
            stream.reset();
            let mut last = 0.0;
            for row in x.chunks_exact(CHANNELS) {
                last = stream.step(rnn, &p, row);
            }
            assert!((full - last).abs() <= 1e-10 * full.abs().max(1e-300), "{full} vs {last}");
        }
    }
}

#[test]
fn positional_encoding_values() {
    let pe0 = positional_encoding(0, 16);
    for i in 0..8 {
        assert_eq!(pe0[2 * i], 0.0);
        assert_eq!(pe0[2 * i + 1], 1.0);
    }
    let pe1 = positional_encoding(1, 16);
    assert!((pe1[0] - 0.841_470_984_807_896_5).abs() < 1e-12);
    assert!((pe1[1] - 0.540_302_305_868_139_8).abs() < 1e-12);
    // Pair 1 frequency is 10000^(-2/16).
    let w1 = 10000f64.powf(-0.125);
    assert!((pe1[2] - w1.sin()).abs() < 1e-15);
    for pos in 0..HISTORY {
        assert!(positional_encoding(pos, 16).iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

#[test]
fn default_parameter_counts() {
    let count = |a| ArchConfig::default_for(a).build().param_count();
    // 90·256+256 + 256·128+128 + 128·64+64 + 64+1
    assert_eq!(count(Arch::Mlp), 64_513);
    // 3·64·(3+64) + 2·3·64 + 64 + 1
    assert_eq!(count(Arch::Rnn), 13_313);
    let t = count(Arch::Transformer);
    let rnn = count(Arch::Rnn);
    assert!(t * 2 >= rnn && rnn * 2 >= t, "transformer {t} vs rnn {rnn}");
}

#[test]
fn zero_head_predicts_output_mean() {
    let norm = Normalizer {
        input_mean: [1.0, 0.5, 0.0],
        input_std: [2.0, 1.0, 3.0],
        output_mean: 7.25,
        output_std: 2.5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for arch in Arch::ALL {
        let config = ArchConfig::default_for(arch);
        let net = config.build();
        let mut p = vec![0.0f32; net.param_count()];
        net.init(&mut rng, &mut p, true);
        let model = EstimatorModel::new(config, p, norm, ModelMeta::default()).unwrap();
        let window = tendonsim_estimators::HistoryWindow {
            values: random_window(&mut rng, HISTORY),
        };
        assert_eq!(model.predict(&window), 7.25, "{arch}");
    }
}
