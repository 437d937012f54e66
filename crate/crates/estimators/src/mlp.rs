//! Feed-forward estimator over the flattened history window.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::network::Net;
use crate::ops::{relu_backward, relu_inplace};
use crate::params::{Dense, ParamLayout};
use crate::scalar::Scalar;
use crate::window::CHANNELS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub history: usize,
    pub hidden: Vec<usize>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            history: crate::window::HISTORY,
            hidden: vec![256, 128, 64],
        }
    }
}

#[derive(Debug, Clone)]
pub struct Mlp {
    pub config: MlpConfig,
    layers: Vec<Dense>,
    layout: ParamLayout,
}

#[derive(Debug, Default, Clone)]
pub struct MlpCache<S> {
    /// Post-activation output of every hidden layer.
    acts: Vec<Vec<S>>,
    grad_a: Vec<S>,
    grad_b: Vec<S>,
}

impl Mlp {
    pub fn new(config: MlpConfig) -> Self {
        let mut layout = ParamLayout::default();
        let mut layers = Vec::new();
        let mut n_in = config.history * CHANNELS;
        for (i, &width) in config.hidden.iter().enumerate() {
            layers.push(Dense::new(&mut layout, &format!("layers.{i}"), n_in, width));
            n_in = width;
        }
        layers.push(Dense::new(&mut layout, "out", n_in, 1));
        Self {
            config,
            layers,
            layout,
        }
    }
}

impl Net for Mlp {
    type Cache<S: Scalar> = MlpCache<S>;

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn history(&self) -> usize {
        self.config.history
    }

    fn init<S: Scalar, R: Rng>(&self, rng: &mut R, p: &mut [S], zero_head: bool) {
        for layer in &self.layers {
            layer.init(rng, p);
        }
        if zero_head {
            self.layers.last().expect("output layer").zero(p);
        }
    }

    fn forward<S: Scalar>(&self, p: &[S], x: &[S], c: &mut MlpCache<S>) -> S {
        let hidden = self.layers.len() - 1;
        c.acts.resize_with(hidden, Vec::new);
        for l in 0..hidden {
            let layer = &self.layers[l];
            let mut out = std::mem::take(&mut c.acts[l]);
            out.resize(layer.n_out, S::ZERO);
            let input = if l == 0 { x } else { &c.acts[l - 1] };
            layer.forward(p, input, &mut out);
            relu_inplace(&mut out);
            c.acts[l] = out;
        }
        let last = self.layers.last().expect("output layer");
        let mut y = [S::ZERO];
        let input = if hidden == 0 { x } else { &c.acts[hidden - 1] };
        last.forward(p, input, &mut y);
        y[0]
    }

    fn backward<S: Scalar>(&self, p: &[S], x: &[S], c: &mut MlpCache<S>, dy: S, g: &mut [S]) {
        let hidden = self.layers.len() - 1;
        let mut upstream = std::mem::take(&mut c.grad_a);
        let mut below = std::mem::take(&mut c.grad_b);
        upstream.clear();
        upstream.push(dy);
        for l in (0..=hidden).rev() {
            let layer = &self.layers[l];
            let input = if l == 0 { x } else { &c.acts[l - 1] };
            if l == 0 {
                layer.backward(p, input, &upstream, g, None);
            } else {
                below.clear();
                below.resize(layer.n_in, S::ZERO);
                layer.backward(p, input, &upstream, g, Some(&mut below));
                relu_backward(&c.acts[l - 1], &mut below);
                std::mem::swap(&mut upstream, &mut below);
            }
        }
        c.grad_a = upstream;
        c.grad_b = below;
    }
}
