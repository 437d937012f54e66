//! Flat parameter storage with named tensor views.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub tensors: Vec<TensorSpec>,
}

impl ParamLayout {
    /// Appends a tensor and returns its range in the flat store.
    pub fn push(&mut self, name: impl Into<String>, shape: &[usize]) -> Range<usize> {
        let spec = TensorSpec {
            name: name.into(),
            shape: shape.to_vec(),
            offset: self.total(),
        };
        let r = spec.range();
        self.tensors.push(spec);
        r
    }

    pub fn total(&self) -> usize {
        self.tensors.last().map_or(0, |t| t.offset + t.len())
    }

    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

/// A dense layer's weight and bias ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dense {
    pub w: Range<usize>,
    pub b: Range<usize>,
    pub n_in: usize,
    pub n_out: usize,
}

impl Dense {
    pub fn new(layout: &mut ParamLayout, name: &str, n_in: usize, n_out: usize) -> Self {
        let w = layout.push(format!("{name}.weight"), &[n_out, n_in]);
        let b = layout.push(format!("{name}.bias"), &[n_out]);
        Self { w, b, n_in, n_out }
    }

    /// Uniform(±1/√fan_in) for weight and bias.
    pub fn init<S: Scalar, R: Rng>(&self, rng: &mut R, p: &mut [S]) {
        let bound = 1.0 / (self.n_in as f64).sqrt();
        fill_uniform(rng, &mut p[self.w.clone()], bound);
        fill_uniform(rng, &mut p[self.b.clone()], bound);
    }

    pub fn zero<S: Scalar>(&self, p: &mut [S]) {
        p[self.w.clone()].fill(S::ZERO);
        p[self.b.clone()].fill(S::ZERO);
    }

    pub fn forward<S: Scalar>(&self, p: &[S], x: &[S], out: &mut [S]) {
        crate::ops::linear(&p[self.w.clone()], &p[self.b.clone()], x, out);
    }

    pub fn backward<S: Scalar>(&self, p: &[S], x: &[S], dy: &[S], g: &mut [S], dx: Option<&mut [S]>) {
        let (gw, gb) = split_pair(g, &self.w, &self.b);
        crate::ops::linear_backward(&p[self.w.clone()], x, dy, gw, gb, dx);
    }
}

/// Mutable views of two disjoint, adjacent-or-not ranges of one buffer.
pub fn split_pair<'a, S>(buf: &'a mut [S], a: &Range<usize>, b: &Range<usize>) -> (&'a mut [S], &'a mut [S]) {
    assert!(a.end <= b.start, "ranges must be ordered and disjoint");
    let (left, right) = buf.split_at_mut(b.start);
    (&mut left[a.clone()], &mut right[..b.len()])
}

pub fn fill_uniform<S: Scalar, R: Rng>(rng: &mut R, out: &mut [S], bound: f64) {
    for v in out {
        *v = S::from_f64(rng.random_range(-bound..bound));
    }
}
