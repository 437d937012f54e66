//! Single-layer recurrent estimator (gated or vanilla cell) with a linear head
//! on the final hidden state. Gate layout follows the r, z, n convention.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::network::Net;
use crate::ops::{axpy, linear};
use crate::params::{fill_uniform, Dense, ParamLayout};
use crate::scalar::{sigmoid, Scalar};
use crate::window::CHANNELS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    Gru,
    Vanilla,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RnnConfig {
    pub history: usize,
    pub hidden: usize,
    pub cell: Cell,
}

impl Default for RnnConfig {
    fn default() -> Self {
        Self {
            history: crate::window::HISTORY,
            hidden: 64,
            cell: Cell::Gru,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Rnn {
    pub config: RnnConfig,
    layout: ParamLayout,
    w_ih: Range<usize>,
    w_hh: Range<usize>,
    b_ih: Range<usize>,
    b_hh: Range<usize>,
    head: Dense,
}

#[derive(Debug, Default, Clone)]
pub struct RnnCache<S> {
    /// Hidden states h_0 (zeros) .. h_T.
    hs: Vec<Vec<S>>,
    /// Input projections per step.
    gi: Vec<Vec<S>>,
    /// Recurrent projections per step (pre-activation, bias included).
    gh: Vec<Vec<S>>,
    /// Gate activations per step: r, z, n for the gated cell.
    gates: Vec<Vec<S>>,
    dh: Vec<S>,
    dh_prev: Vec<S>,
    dgi: Vec<S>,
    dgh: Vec<S>,
}

impl Rnn {
    pub fn new(config: RnnConfig) -> Self {
        let mut layout = ParamLayout::default();
        let h = config.hidden;
        let g = match config.cell {
            Cell::Gru => 3 * h,
            Cell::Vanilla => h,
        };
        let w_ih = layout.push("rnn.weight_ih", &[g, CHANNELS]);
        let w_hh = layout.push("rnn.weight_hh", &[g, h]);
        let b_ih = layout.push("rnn.bias_ih", &[g]);
        let b_hh = layout.push("rnn.bias_hh", &[g]);
        let head = Dense::new(&mut layout, "head", h, 1);
        Self {
            config,
            layout,
            w_ih,
            w_hh,
            b_ih,
            b_hh,
            head,
        }
    }

    fn gate_rows(&self) -> usize {
        self.w_ih.len() / CHANNELS
    }

    /// Input projection W_ih·x + b_ih for one row.
    pub fn input_projection<S: Scalar>(&self, p: &[S], row: &[S], out: &mut Vec<S>) {
        out.resize(self.gate_rows(), S::ZERO);
        linear(&p[self.w_ih.clone()], &p[self.b_ih.clone()], row, out);
    }

    /// One recurrence step from precomputed input projection `gi`. Writes the
    /// recurrent projection and gate values when buffers are supplied.
    pub fn cell_step<S: Scalar>(
        &self,
        p: &[S],
        gi: &[S],
        h: &[S],
        h_out: &mut [S],
        gh: &mut Vec<S>,
        gates: &mut Vec<S>,
    ) {
        let n = self.config.hidden;
        gh.resize(self.gate_rows(), S::ZERO);
        linear(&p[self.w_hh.clone()], &p[self.b_hh.clone()], h, gh);
        match self.config.cell {
            Cell::Gru => {
                gates.resize(3 * n, S::ZERO);
                for k in 0..n {
                    let r = sigmoid(gi[k] + gh[k]);
                    let z = sigmoid(gi[n + k] + gh[n + k]);
                    let cand = (gi[2 * n + k] + r * gh[2 * n + k]).tanh();
                    gates[k] = r;
                    gates[n + k] = z;
                    gates[2 * n + k] = cand;
                    h_out[k] = (S::ONE - z) * cand + z * h[k];
                }
            }
            Cell::Vanilla => {
                gates.resize(n, S::ZERO);
                for k in 0..n {
                    let v = (gi[k] + gh[k]).tanh();
                    gates[k] = v;
                    h_out[k] = v;
                }
            }
        }
    }

    pub fn head_output<S: Scalar>(&self, p: &[S], h: &[S]) -> S {
        let mut y = [S::ZERO];
        self.head.forward(p, h, &mut y);
        y[0]
    }
}

/// Carried hidden state for step-by-step inference.
#[derive(Debug, Clone)]
pub struct RnnStream<S> {
    pub h: Vec<S>,
    gi: Vec<S>,
    gh: Vec<S>,
    gates: Vec<S>,
    next: Vec<S>,
}

impl<S: Scalar> RnnStream<S> {
    pub fn new(hidden: usize) -> Self {
        Self {
            h: vec![S::ZERO; hidden],
            gi: Vec::new(),
            gh: Vec::new(),
            gates: Vec::new(),
            next: vec![S::ZERO; hidden],
        }
    }

    pub fn reset(&mut self) {
        self.h.fill(S::ZERO);
    }

    /// Consumes one normalized row and returns the head output for the new state.
    pub fn step(&mut self, rnn: &Rnn, p: &[S], row: &[S]) -> S {
        rnn.input_projection(p, row, &mut self.gi);
        rnn.cell_step(p, &self.gi, &self.h, &mut self.next, &mut self.gh, &mut self.gates);
        std::mem::swap(&mut self.h, &mut self.next);
        rnn.head_output(p, &self.h)
    }
}

impl Net for Rnn {
    type Cache<S: Scalar> = RnnCache<S>;

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn history(&self) -> usize {
        self.config.history
    }

    fn init<S: Scalar, R: Rng>(&self, rng: &mut R, p: &mut [S], zero_head: bool) {
        let bound = 1.0 / (self.config.hidden as f64).sqrt();
        for r in [&self.w_ih, &self.w_hh, &self.b_ih, &self.b_hh] {
            fill_uniform(rng, &mut p[r.clone()], bound);
        }
        self.head.init(rng, p);
        if zero_head {
            self.head.zero(p);
        }
    }

    fn forward<S: Scalar>(&self, p: &[S], x: &[S], c: &mut RnnCache<S>) -> S {
        let n = self.config.hidden;
        let steps = x.len() / CHANNELS;
        c.hs.resize_with(steps + 1, Vec::new);
        c.gi.resize_with(steps, Vec::new);
        c.gh.resize_with(steps, Vec::new);
        c.gates.resize_with(steps, Vec::new);
        c.hs[0].clear();
        c.hs[0].resize(n, S::ZERO);
        for t in 0..steps {
            self.input_projection(p, &x[t * CHANNELS..(t + 1) * CHANNELS], &mut c.gi[t]);
        }
        for t in 0..steps {
            let (prev, rest) = c.hs.split_at_mut(t + 1);
            let out = &mut rest[0];
            out.resize(n, S::ZERO);
            self.cell_step(p, &c.gi[t], &prev[t], out, &mut c.gh[t], &mut c.gates[t]);
        }
        self.head_output(p, &c.hs[steps])
    }

    fn backward<S: Scalar>(&self, p: &[S], x: &[S], c: &mut RnnCache<S>, dy: S, g: &mut [S]) {
        let n = self.config.hidden;
        let steps = x.len() / CHANNELS;
        let mut dh = std::mem::take(&mut c.dh);
        let mut dh_prev = std::mem::take(&mut c.dh_prev);
        let mut dgi = std::mem::take(&mut c.dgi);
        let mut dgh = std::mem::take(&mut c.dgh);
        dh.clear();
        dh.resize(n, S::ZERO);
        self.head.backward(p, &c.hs[steps], &[dy], g, Some(&mut dh));

        let rows = self.gate_rows();
        dgi.resize(rows, S::ZERO);
        dgh.resize(rows, S::ZERO);
        let w_hh = &p[self.w_hh.clone()];
        for t in (0..steps).rev() {
            let h_prev = &c.hs[t];
            let gates = &c.gates[t];
            dh_prev.clear();
            dh_prev.resize(n, S::ZERO);
            match self.config.cell {
                Cell::Gru => {
                    let gh = &c.gh[t];
                    for k in 0..n {
                        let (r, z, cand) = (gates[k], gates[n + k], gates[2 * n + k]);
                        let d = dh[k];
                        let d_cand = d * (S::ONE - z);
                        let d_z = d * (h_prev[k] - cand);
                        dh_prev[k] = d * z;
                        let da_n = d_cand * (S::ONE - cand * cand);
                        let d_r = da_n * gh[2 * n + k];
                        let da_r = d_r * r * (S::ONE - r);
                        let da_z = d_z * z * (S::ONE - z);
                        dgi[k] = da_r;
                        dgi[n + k] = da_z;
                        dgi[2 * n + k] = da_n;
                        dgh[k] = da_r;
                        dgh[n + k] = da_z;
                        dgh[2 * n + k] = da_n * r;
                    }
                }
                Cell::Vanilla => {
                    for k in 0..n {
                        let v = gates[k];
                        let da = dh[k] * (S::ONE - v * v);
                        dgi[k] = da;
                        dgh[k] = da;
                    }
                }
            }
            // Recurrent weights.
            for (row, &gval) in dgh.iter().enumerate() {
                if gval == S::ZERO {
                    continue;
                }
                axpy(&mut g[self.w_hh.start + row * n..self.w_hh.start + (row + 1) * n], gval, h_prev);
                g[self.b_hh.start + row] += gval;
                axpy(&mut dh_prev, gval, &w_hh[row * n..(row + 1) * n]);
            }
            // Input weights.
            let xt = &x[t * CHANNELS..(t + 1) * CHANNELS];
            for (row, &gval) in dgi.iter().enumerate() {
                let base = self.w_ih.start + row * CHANNELS;
                for ch in 0..CHANNELS {
                    g[base + ch] += gval * xt[ch];
                }
                g[self.b_ih.start + row] += gval;
            }
            std::mem::swap(&mut dh, &mut dh_prev);
        }
        c.dh = dh;
        c.dh_prev = dh_prev;
        c.dgi = dgi;
        c.dgh = dgh;
    }
}
