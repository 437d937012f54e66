//! ReLU MLPs for the policy mean and the value function.

use rand::Rng;
use tendonsim_estimators::ops::{relu_backward, relu_inplace};
use tendonsim_estimators::params::{Dense, ParamLayout};
use tendonsim_estimators::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct DenseNet {
    pub n_in: usize,
    pub hidden: Vec<usize>,
    layers: Vec<Dense>,
    layout: ParamLayout,
}

#[derive(Debug, Clone, Default)]
pub struct DenseCache<S> {
    acts: Vec<Vec<S>>,
    up: Vec<S>,
    down: Vec<S>,
}

impl DenseNet {
    pub fn new(prefix: &str, n_in: usize, hidden: &[usize]) -> Self {
        let mut layout = ParamLayout::default();
        let mut layers = Vec::new();
        let mut width = n_in;
        for (i, &h) in hidden.iter().enumerate() {
            layers.push(Dense::new(&mut layout, &format!("{prefix}.layers.{i}"), width, h));
            width = h;
        }
        layers.push(Dense::new(&mut layout, &format!("{prefix}.out"), width, 1));
        Self {
            n_in,
            hidden: hidden.to_vec(),
            layers,
            layout,
        }
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.total()
    }

    /// Default initialization with the output layer scaled by `out_scale`.
    pub fn init<S: Scalar, R: Rng>(&self, rng: &mut R, p: &mut [S], out_scale: f64) {
        for layer in &self.layers {
            layer.init(rng, p);
        }
        let last = self.layers.last().expect("output layer");
        for v in &mut p[last.w.clone()] {
            *v *= S::from_f64(out_scale);
        }
        p[last.b.clone()].fill(S::ZERO);
    }

    pub fn forward<S: Scalar>(&self, p: &[S], x: &[S], c: &mut DenseCache<S>) -> S {
        let hidden = self.layers.len() - 1;
        c.acts.resize_with(hidden, Vec::new);
        for l in 0..hidden {
            let layer = &self.layers[l];
            let mut out = std::mem::take(&mut c.acts[l]);
            out.resize(layer.n_out, S::ZERO);
            let input: &[S] = if l == 0 { x } else { &c.acts[l - 1] };
            layer.forward(p, input, &mut out);
            relu_inplace(&mut out);
            c.acts[l] = out;
        }
        let mut y = [S::ZERO];
        let input: &[S] = if hidden == 0 { x } else { &c.acts[hidden - 1] };
        self.layers[hidden].forward(p, input, &mut y);
        y[0]
    }

    /// Accumulates dy·∂y/∂p; the cache must come from the forward on `x`.
    pub fn backward<S: Scalar>(&self, p: &[S], x: &[S], c: &mut DenseCache<S>, dy: S, g: &mut [S]) {
        let mut up = std::mem::take(&mut c.up);
        let mut down = std::mem::take(&mut c.down);
        up.clear();
        up.push(dy);
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if l == 0 {
                layer.backward(p, x, &up, g, None);
            } else {
                down.clear();
                down.resize(layer.n_in, S::ZERO);
                layer.backward(p, &c.acts[l - 1], &up, g, Some(&mut down));
                relu_backward(&c.acts[l - 1], &mut down);
                std::mem::swap(&mut up, &mut down);
            }
        }
        c.up = up;
        c.down = down;
    }
}
