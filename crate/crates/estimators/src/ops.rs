//! Dense kernels shared by the networks. Weight matrices are row-major
//! `[out][in]`; reductions use eight fixed lanes so results do not depend on
//! how the compiler vectorizes.

use crate::scalar::Scalar;

#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [S::ZERO; 8];
    let chunks = a.len() / 8;
    for c in 0..chunks {
        let (xa, xb) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += xa[l] * xb[l];
        }
    }
    let mut tail = S::ZERO;
    for i in chunks * 8..a.len() {
        tail += a[i] * b[i];
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// y += alpha · x
#[inline]
pub fn axpy<S: Scalar>(y: &mut [S], alpha: S, x: &[S]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// out = W·x + b
pub fn linear<S: Scalar>(w: &[S], b: &[S], x: &[S], out: &mut [S]) {
    let n_in = x.len();
    debug_assert_eq!(w.len(), n_in * out.len());
    for (o, slot) in out.iter_mut().enumerate() {
        *slot = dot(&w[o * n_in..(o + 1) * n_in], x) + b[o];
    }
}

/// Accumulates dW += dy ⊗ x and db += dy; adds Wᵀ·dy into `dx` when given.
pub fn linear_backward<S: Scalar>(
    w: &[S],
    x: &[S],
    dy: &[S],
    dw: &mut [S],
    db: &mut [S],
    dx: Option<&mut [S]>,
) {
    let n_in = x.len();
    for (o, &g) in dy.iter().enumerate() {
        if g == S::ZERO {
            continue;
        }
        axpy(&mut dw[o * n_in..(o + 1) * n_in], g, x);
        db[o] += g;
    }
    if let Some(dx) = dx {
        for (o, &g) in dy.iter().enumerate() {
            if g != S::ZERO {
                axpy(dx, g, &w[o * n_in..(o + 1) * n_in]);
            }
        }
    }
}

#[inline]
pub fn relu_inplace<S: Scalar>(x: &mut [S]) {
    for v in x {
        if *v < S::ZERO {
            *v = S::ZERO;
        }
    }
}

/// Zeroes gradient entries whose forward activation was clipped by ReLU.
#[inline]
pub fn relu_backward<S: Scalar>(activated: &[S], grad: &mut [S]) {
    for (g, &a) in grad.iter_mut().zip(activated) {
        if a <= S::ZERO {
            *g = S::ZERO;
        }
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Layer norm over one feature vector. Writes the normalized vector into
/// `xhat` and returns 1/σ for the backward pass.
pub fn layer_norm<S: Scalar>(x: &[S], gamma: &[S], beta: &[S], xhat: &mut [S], out: &mut [S]) -> S {
    let n = S::from_f64(x.len() as f64);
    let mean = x.iter().copied().sum::<S>() / n;
    let var = x.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / n;
    let inv = S::ONE / (var + S::from_f64(LAYER_NORM_EPS)).sqrt();
    for i in 0..x.len() {
        xhat[i] = (x[i] - mean) * inv;
        out[i] = gamma[i] * xhat[i] + beta[i];
    }
    inv
}

/// Backward of [`layer_norm`]; accumulates into `dgamma`, `dbeta` and
/// overwrites `dx`.
pub fn layer_norm_backward<S: Scalar>(
    dy: &[S],
    xhat: &[S],
    inv: S,
    gamma: &[S],
    dgamma: &mut [S],
    dbeta: &mut [S],
    dx: &mut [S],
) {
    let len = dy.len();
    let n = S::from_f64(len as f64);
    let mut sum_d = S::ZERO;
    let mut sum_dx = S::ZERO;
    for i in 0..len {
        let d = dy[i] * gamma[i];
        dgamma[i] += dy[i] * xhat[i];
        dbeta[i] += dy[i];
        sum_d += d;
        sum_dx += d * xhat[i];
        dx[i] = d;
    }
    for i in 0..len {
        dx[i] = inv / n * (n * dx[i] - sum_d - xhat[i] * sum_dx);
    }
}
