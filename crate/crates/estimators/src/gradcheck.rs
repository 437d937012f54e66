//! Central-difference verification of the analytic gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::mlp::MlpConfig;
use crate::network::{ArchConfig, Net, Network, NetworkCache};
use crate::rnn::{Cell, RnnConfig};
use crate::transformer::TransformerConfig;
use crate::window::CHANNELS;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Tensor holding the worst-agreeing parameter.
    pub worst_tensor: String,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    /// Parameters skipped because a ReLU switched inside ±h (one-sided
    /// differences disagree), where central differences are meaningless.
    pub kinks: usize,
}

/// Denominator floor so parameters with vanishing gradient are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

/// Relative disagreement above which a parameter is screened for a kink.
const KINK_SCREEN: f64 = 1e-4;

/// Compares ∂y/∂p from `backward` against (y(p+h) − y(p−h)) / 2h for every
/// `every`-th parameter.
pub fn numerical_grad_check(net: &Network, params: &[f64], window: &[f64], h: f64, every: usize) -> GradCheckReport {
    let mut cache = NetworkCache::default();
    let mut grad = vec![0.0; params.len()];
    net.forward(params, window, &mut cache);
    net.backward(params, window, &mut cache, 1.0, &mut grad);

    let layout = net.layout();
    let mut p = params.to_vec();
    let mut report = GradCheckReport {
        checked: 0,
        max_rel_error: 0.0,
        worst_tensor: String::new(),
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        kinks: 0,
    };
    let base = net.forward(&p, window, &mut cache);
    for i in (0..p.len()).step_by(every.max(1)) {
        let orig = p[i];
        p[i] = orig + h;
        let plus = net.forward(&p, window, &mut cache);
        p[i] = orig - h;
        let minus = net.forward(&p, window, &mut cache);
        p[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let analytic = grad[i];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        let forward = (plus - base) / h;
        let backward = (base - minus) / h;
        if rel > KINK_SCREEN && (forward - backward).abs() > KINK_SCREEN * forward.abs().max(backward.abs()).max(REL_FLOOR) {
            report.kinks += 1;
            continue;
        }
        report.checked += 1;
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_tensor = layout
                .tensors
                .iter()
                .find(|t| t.range().contains(&i))
                .map_or_else(String::new, |t| t.name.clone());
            report.worst_analytic = analytic;
            report.worst_numeric = numeric;
        }
    }
    report
}

/// Small networks of each architecture that keep a full check fast while
/// exercising every code path (30-step recurrence, multi-head masked attention,
/// layer norm, every ReLU stack).
pub fn probe_configs() -> Vec<ArchConfig> {
    vec![
        ArchConfig::Mlp(MlpConfig {
            history: 10,
            hidden: vec![16, 12, 8],
        }),
        ArchConfig::Rnn(RnnConfig {
            history: 30,
            hidden: 8,
            cell: Cell::Gru,
        }),
        ArchConfig::Rnn(RnnConfig {
            history: 30,
            hidden: 8,
            cell: Cell::Vanilla,
        }),
        ArchConfig::Transformer(TransformerConfig {
            history: 8,
            width: 8,
            heads: 2,
            layers: 2,
            ff_width: 16,
            head_hidden: vec![12, 8],
        }),
    ]
}

/// Runs the check on a seeded random initialization and window.
pub fn check_config(config: &ArchConfig, seed: u64, every: usize) -> GradCheckReport {
    use rand::Rng;
    let net = config.build();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = vec![0.0f64; net.layout().total()];
    net.init(&mut rng, &mut params, false);
    let window: Vec<f64> = (0..net.history() * CHANNELS).map(|_| rng.random_range(-1.5..1.5)).collect();
    numerical_grad_check(&net, &params, &window, 1e-5, every)
}
