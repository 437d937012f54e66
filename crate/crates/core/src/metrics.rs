//! Error statistics shared by the evaluation reports.

/// Root-mean-square error over paired samples; 0 for empty input.
pub fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "rmse needs paired samples");
    if pred.is_empty() {
        return 0.0;
    }
    let sum: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    (sum / pred.len() as f64).sqrt()
}

/// Population standard deviation of |pred − truth|.
pub fn std_abs_error(pred: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "std_abs_error needs paired samples");
    let n = pred.len();
    if n == 0 {
        return 0.0;
    }
    let (mut mean, mut m2) = (0.0, 0.0);
    for (k, (p, t)) in pred.iter().zip(truth).enumerate() {
        let x = (p - t).abs();
        let delta = x - mean;
        mean += delta / (k + 1) as f64;
        m2 += delta * (x - mean);
    }
    (m2 / n as f64).sqrt()
}

/// Reference implementation kept deliberately plain: build the residuals,
/// average their squares in a second pass.
pub fn rmse_two_pass(pred: &[f64], truth: &[f64]) -> f64 {
    let residuals: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| p - t).collect();
    if residuals.is_empty() {
        return 0.0;
    }
    let mut acc = 0.0;
    for r in &residuals {
        acc += r * r;
    }
    (acc / residuals.len() as f64).sqrt()
}

/// Euclidean RMSE between two planar traces.
pub fn rmse_2d(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    assert_eq!(a.len(), b.len(), "rmse_2d needs paired samples");
    if a.is_empty() {
        return 0.0;
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(p, q)| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2))
        .sum();
    (sum / a.len() as f64).sqrt()
}

/// Lag, in samples, at which `signal` best lines up with `reference`: the k in
/// `[-max_lag, max_lag]` maximizing Σ s[i]·r[i + k] over mean-removed series.
/// Positive k means `signal` leads the reference.
pub fn cross_correlation_lag(reference: &[f64], signal: &[f64], max_lag: usize) -> i64 {
    assert_eq!(reference.len(), signal.len(), "lag needs paired samples");
    let n = reference.len();
    if n == 0 {
        return 0;
    }
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let (mr, ms) = (mean(reference), mean(signal));
    let max_lag = max_lag.min(n - 1) as i64;
    let mut best = (0i64, f64::NEG_INFINITY);
    for k in -max_lag..=max_lag {
        let mut acc = 0.0;
        let mut count = 0usize;
        for i in 0..n as i64 {
            let j = i + k;
            if j < 0 || j >= n as i64 {
                continue;
            }
            acc += (signal[i as usize] - ms) * (reference[j as usize] - mr);
            count += 1;
        }
        let score = acc / count.max(1) as f64;
        // Ties go to the smallest |k|, scanned from negative to positive.
        if score > best.1 + 1e-15 || (score >= best.1 - 1e-15 && k.abs() < best.0.abs()) {
            best = (k, score);
        }
    }
    best.0
}
