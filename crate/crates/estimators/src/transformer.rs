//! Causal transformer encoder: linear input projection plus sinusoidal
//! positions, post-norm encoder layers with masked multi-head attention, and an
//! MLP head on the queried position.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::network::Net;
use crate::ops::{dot, layer_norm, layer_norm_backward, relu_backward, relu_inplace};
use crate::params::{Dense, ParamLayout};
use crate::scalar::Scalar;
use crate::window::CHANNELS;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformerConfig {
    pub history: usize,
    pub width: usize,
    pub heads: usize,
    pub layers: usize,
    pub ff_width: usize,
    pub head_hidden: Vec<usize>,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            history: crate::window::HISTORY,
            width: 16,
            heads: 4,
            layers: 2,
            ff_width: 64,
            head_hidden: vec![128, 64],
        }
    }
}

/// Interleaved sinusoidal encoding: entry 2i is sin(pos·ω_i), 2i+1 is cos(pos·ω_i),
/// with ω_i = 10000^(−2i/width).
pub fn positional_encoding(position: usize, width: usize) -> Vec<f64> {
    (0..width)
        .map(|j| {
            let pair = j / 2;
            let omega = 10000f64.powf(-(2.0 * pair as f64) / width as f64);
            let angle = position as f64 * omega;
            if j % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    q: Dense,
    k: Dense,
    v: Dense,
    o: Dense,
    ln1_g: Range<usize>,
    ln1_b: Range<usize>,
    ff1: Dense,
    ff2: Dense,
    ln2_g: Range<usize>,
    ln2_b: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct Transformer {
    pub config: TransformerConfig,
    layout: ParamLayout,
    input: Dense,
    layers: Vec<EncoderLayer>,
    head: Vec<Dense>,
    pe: Vec<f64>,
}

#[derive(Debug, Default, Clone)]
struct LayerCache<S> {
    /// First query row; rows before it are only used as keys and values.
    q_start: usize,
    input: Vec<S>,
    q: Vec<S>,
    k: Vec<S>,
    v: Vec<S>,
    attn: Vec<S>,
    ctx: Vec<S>,
    xhat1: Vec<S>,
    inv1: Vec<S>,
    h1: Vec<S>,
    ff: Vec<S>,
    xhat2: Vec<S>,
    inv2: Vec<S>,
    out: Vec<S>,
}

#[derive(Debug, Default, Clone)]
pub struct TransformerCache<S> {
    rows: usize,
    layers: Vec<LayerCache<S>>,
    head_acts: Vec<Vec<S>>,
    // Backward scratch.
    d_out: Vec<S>,
    d_in: Vec<S>,
    d_q: Vec<S>,
    d_k: Vec<S>,
    d_v: Vec<S>,
    d_ctx: Vec<S>,
    d_h1: Vec<S>,
    d_r: Vec<S>,
    d_ff: Vec<S>,
    d_a: Vec<S>,
    d_head_a: Vec<S>,
    d_head_b: Vec<S>,
}

impl Transformer {
    pub fn new(config: TransformerConfig) -> Self {
        assert!(config.width % config.heads == 0, "width must split evenly across heads");
        assert!(config.width % 2 == 0, "positional encoding needs an even width");
        let w = config.width;
        let mut layout = ParamLayout::default();
        let input = Dense::new(&mut layout, "input", CHANNELS, w);
        let mut layers = Vec::new();
        for l in 0..config.layers {
            let name = |s: &str| format!("layers.{l}.{s}");
            let q = Dense::new(&mut layout, &name("attn.q"), w, w);
            let k = Dense::new(&mut layout, &name("attn.k"), w, w);
            let v = Dense::new(&mut layout, &name("attn.v"), w, w);
            let o = Dense::new(&mut layout, &name("attn.out"), w, w);
            let ln1_g = layout.push(name("norm1.weight"), &[w]);
            let ln1_b = layout.push(name("norm1.bias"), &[w]);
            let ff1 = Dense::new(&mut layout, &name("ff.0"), w, config.ff_width);
            let ff2 = Dense::new(&mut layout, &name("ff.1"), config.ff_width, w);
            let ln2_g = layout.push(name("norm2.weight"), &[w]);
            let ln2_b = layout.push(name("norm2.bias"), &[w]);
            layers.push(EncoderLayer {
                q,
                k,
                v,
                o,
                ln1_g,
                ln1_b,
                ff1,
                ff2,
                ln2_g,
                ln2_b,
            });
        }
        let mut head = Vec::new();
        let mut n_in = w;
        for (i, &width) in config.head_hidden.iter().chain(std::iter::once(&1)).enumerate() {
            head.push(Dense::new(&mut layout, &format!("head.{i}"), n_in, width));
            n_in = width;
        }
        let pe = (0..config.history)
            .flat_map(|pos| positional_encoding(pos, w))
            .collect();
        Self {
            config,
            layout,
            input,
            layers,
            head,
            pe,
        }
    }

    /// Output for the window prefix ending at row `pos`. Rows after `pos` are
    /// never read.
    pub fn forward_at<S: Scalar>(&self, p: &[S], x: &[S], pos: usize, c: &mut TransformerCache<S>) -> S {
        let w = self.config.width;
        let rows = pos + 1;
        assert!(rows * CHANNELS <= x.len(), "position beyond window");
        c.rows = rows;
        c.layers.resize_with(self.layers.len(), LayerCache::default);

        let emb = &mut c.layers[0].input;
        emb.clear();
        emb.resize(rows * w, S::ZERO);
        for t in 0..rows {
            let out = &mut emb[t * w..(t + 1) * w];
            self.input.forward(p, &x[t * CHANNELS..(t + 1) * CHANNELS], out);
            for (o, &e) in out.iter_mut().zip(&self.pe[t * w..(t + 1) * w]) {
                *o += S::from_f64(e);
            }
        }
        let last = self.layers.len() - 1;
        for l in 0..self.layers.len() {
            let q_start = if l == last { pos } else { 0 };
            if l > 0 {
                let (prev, cur) = c.layers.split_at_mut(l);
                cur[0].input.clone_from(&prev[l - 1].out);
            }
            self.layer_forward(l, p, &mut c.layers[l], q_start, rows);
        }

        c.head_acts.resize_with(self.head.len(), Vec::new);
        for (i, layer) in self.head.iter().enumerate() {
            let mut out = std::mem::take(&mut c.head_acts[i]);
            out.resize(layer.n_out, S::ZERO);
            let feature: &[S] = if i == 0 { &c.layers[last].out } else { &c.head_acts[i - 1] };
            layer.forward(p, feature, &mut out);
            if i + 1 < self.head.len() {
                relu_inplace(&mut out);
            }
            c.head_acts[i] = out;
        }
        c.head_acts[self.head.len() - 1][0]
    }

    fn layer_forward<S: Scalar>(&self, l: usize, p: &[S], c: &mut LayerCache<S>, q_start: usize, rows: usize) {
        let layer = &self.layers[l];
        let w = self.config.width;
        let heads = self.config.heads;
        let hd = w / heads;
        let scale = S::from_f64(1.0 / (hd as f64).sqrt());
        let nq = rows - q_start;
        c.q_start = q_start;

        c.q.resize(nq * w, S::ZERO);
        c.k.resize(rows * w, S::ZERO);
        c.v.resize(rows * w, S::ZERO);
        for i in 0..nq {
            let row = q_start + i;
            layer.q.forward(p, &c.input[row * w..(row + 1) * w], &mut c.q[i * w..(i + 1) * w]);
        }
        for j in 0..rows {
            layer.k.forward(p, &c.input[j * w..(j + 1) * w], &mut c.k[j * w..(j + 1) * w]);
            layer.v.forward(p, &c.input[j * w..(j + 1) * w], &mut c.v[j * w..(j + 1) * w]);
        }

        c.attn.clear();
        c.attn.resize(nq * heads * rows, S::ZERO);
        c.ctx.clear();
        c.ctx.resize(nq * w, S::ZERO);
        for i in 0..nq {
            let qi = q_start + i;
            for h in 0..heads {
                let qv = &c.q[i * w + h * hd..i * w + (h + 1) * hd];
                let a = &mut c.attn[(i * heads + h) * rows..(i * heads + h + 1) * rows];
                let mut max = S::from_f64(f64::NEG_INFINITY);
                for j in 0..=qi {
                    let s = dot(qv, &c.k[j * w + h * hd..j * w + (h + 1) * hd]) * scale;
                    a[j] = s;
                    max = max.max(s);
                }
                let mut sum = S::ZERO;
                for aj in a.iter_mut().take(qi + 1) {
                    *aj = (*aj - max).exp();
                    sum += *aj;
                }
                let ctx = &mut c.ctx[i * w + h * hd..i * w + (h + 1) * hd];
                for j in 0..=qi {
                    a[j] /= sum;
                    let vj = &c.v[j * w + h * hd..j * w + (h + 1) * hd];
                    for d in 0..hd {
                        ctx[d] += a[j] * vj[d];
                    }
                }
            }
        }

        c.xhat1.resize(nq * w, S::ZERO);
        c.inv1.resize(nq, S::ZERO);
        c.h1.resize(nq * w, S::ZERO);
        c.ff.resize(nq * self.config.ff_width, S::ZERO);
        c.xhat2.resize(nq * w, S::ZERO);
        c.inv2.resize(nq, S::ZERO);
        c.out.resize(nq * w, S::ZERO);
        let fw = self.config.ff_width;
        let mut r = vec![S::ZERO; w];
        for i in 0..nq {
            let row = q_start + i;
            layer.o.forward(p, &c.ctx[i * w..(i + 1) * w], &mut r);
            for d in 0..w {
                r[d] += c.input[row * w + d];
            }
            c.inv1[i] = layer_norm(
                &r,
                &p[layer.ln1_g.clone()],
                &p[layer.ln1_b.clone()],
                &mut c.xhat1[i * w..(i + 1) * w],
                &mut c.h1[i * w..(i + 1) * w],
            );
            let ff = &mut c.ff[i * fw..(i + 1) * fw];
            layer.ff1.forward(p, &c.h1[i * w..(i + 1) * w], ff);
            relu_inplace(ff);
            layer.ff2.forward(p, ff, &mut r);
            for d in 0..w {
                r[d] += c.h1[i * w + d];
            }
            c.inv2[i] = layer_norm(
                &r,
                &p[layer.ln2_g.clone()],
                &p[layer.ln2_b.clone()],
                &mut c.xhat2[i * w..(i + 1) * w],
                &mut c.out[i * w..(i + 1) * w],
            );
        }
    }

    /// Backward through one encoder layer: `d_out` holds gradients for the
    /// query rows, `d_in` receives gradients for every input row.
    #[allow(clippy::too_many_arguments)]
    fn layer_backward<S: Scalar>(
        &self,
        l: usize,
        p: &[S],
        c: &LayerCache<S>,
        rows: usize,
        d_out: &[S],
        d_in: &mut Vec<S>,
        g: &mut [S],
        s: &mut Scratch<'_, S>,
    ) {
        let layer = &self.layers[l];
        let w = self.config.width;
        let fw = self.config.ff_width;
        let heads = self.config.heads;
        let hd = w / heads;
        let scale = S::from_f64(1.0 / (hd as f64).sqrt());
        let q_start = c.q_start;
        let nq = rows - q_start;

        d_in.clear();
        d_in.resize(rows * w, S::ZERO);
        s.d_q.clear();
        s.d_q.resize(nq * w, S::ZERO);
        s.d_k.clear();
        s.d_k.resize(rows * w, S::ZERO);
        s.d_v.clear();
        s.d_v.resize(rows * w, S::ZERO);
        s.d_h1.resize(w, S::ZERO);
        s.d_r.resize(w, S::ZERO);
        s.d_ctx.resize(w, S::ZERO);
        s.d_ff.resize(fw, S::ZERO);
        s.d_a.resize(rows, S::ZERO);

        for i in 0..nq {
            let row = q_start + i;
            // Second norm and feed-forward block.
            {
                let (gg, gb) = crate::params::split_pair(g, &layer.ln2_g, &layer.ln2_b);
                layer_norm_backward(
                    &d_out[i * w..(i + 1) * w],
                    &c.xhat2[i * w..(i + 1) * w],
                    c.inv2[i],
                    &p[layer.ln2_g.clone()],
                    gg,
                    gb,
                    s.d_r,
                );
            }
            s.d_h1.copy_from_slice(s.d_r);
            s.d_ff.fill(S::ZERO);
            let ff = &c.ff[i * fw..(i + 1) * fw];
            layer.ff2.backward(p, ff, s.d_r, g, Some(s.d_ff));
            relu_backward(ff, s.d_ff);
            layer.ff1.backward(p, &c.h1[i * w..(i + 1) * w], s.d_ff, g, Some(s.d_h1));
            // First norm and attention output projection.
            {
                let (gg, gb) = crate::params::split_pair(g, &layer.ln1_g, &layer.ln1_b);
                layer_norm_backward(
                    s.d_h1,
                    &c.xhat1[i * w..(i + 1) * w],
                    c.inv1[i],
                    &p[layer.ln1_g.clone()],
                    gg,
                    gb,
                    s.d_r,
                );
            }
            for d in 0..w {
                d_in[row * w + d] += s.d_r[d];
            }
            s.d_ctx.fill(S::ZERO);
            layer.o.backward(p, &c.ctx[i * w..(i + 1) * w], s.d_r, g, Some(s.d_ctx));
            // Masked softmax attention.
            for h in 0..heads {
                let a = &c.attn[(i * heads + h) * rows..(i * heads + h + 1) * rows];
                let dctx = &s.d_ctx[h * hd..(h + 1) * hd];
                let mut weighted = S::ZERO;
                for j in 0..=row {
                    let da = dot(dctx, &c.v[j * w + h * hd..j * w + (h + 1) * hd]);
                    s.d_a[j] = da;
                    weighted += a[j] * da;
                    let dv = &mut s.d_v[j * w + h * hd..j * w + (h + 1) * hd];
                    for d in 0..hd {
                        dv[d] += a[j] * dctx[d];
                    }
                }
                let qv = &c.q[i * w + h * hd..i * w + (h + 1) * hd];
                for j in 0..=row {
                    let ds = a[j] * (s.d_a[j] - weighted) * scale;
                    if ds == S::ZERO {
                        continue;
                    }
                    let kj = &c.k[j * w + h * hd..j * w + (h + 1) * hd];
                    let dq = &mut s.d_q[i * w + h * hd..i * w + (h + 1) * hd];
                    for d in 0..hd {
                        dq[d] += ds * kj[d];
                    }
                    let dk = &mut s.d_k[j * w + h * hd..j * w + (h + 1) * hd];
                    for d in 0..hd {
                        dk[d] += ds * qv[d];
                    }
                }
            }
        }
        for i in 0..nq {
            let row = q_start + i;
            layer.q.backward(
                p,
                &c.input[row * w..(row + 1) * w],
                &s.d_q[i * w..(i + 1) * w],
                g,
                Some(&mut d_in[row * w..(row + 1) * w]),
            );
        }
        for j in 0..rows {
            let input = &c.input[j * w..(j + 1) * w];
            let din = &mut d_in[j * w..(j + 1) * w];
            layer.k.backward(p, input, &s.d_k[j * w..(j + 1) * w], g, Some(&mut *din));
            layer.v.backward(p, input, &s.d_v[j * w..(j + 1) * w], g, Some(din));
        }
    }
}

struct Scratch<'a, S> {
    d_q: &'a mut Vec<S>,
    d_k: &'a mut Vec<S>,
    d_v: &'a mut Vec<S>,
    d_ctx: &'a mut Vec<S>,
    d_h1: &'a mut Vec<S>,
    d_r: &'a mut Vec<S>,
    d_ff: &'a mut Vec<S>,
    d_a: &'a mut Vec<S>,
}

impl Net for Transformer {
    type Cache<S: Scalar> = TransformerCache<S>;

    fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    fn history(&self) -> usize {
        self.config.history
    }

    fn init<S: Scalar, R: Rng>(&self, rng: &mut R, p: &mut [S], zero_head: bool) {
        self.input.init(rng, p);
        for layer in &self.layers {
            for d in [&layer.q, &layer.k, &layer.v, &layer.o, &layer.ff1, &layer.ff2] {
                d.init(rng, p);
            }
            p[layer.ln1_g.clone()].fill(S::ONE);
            p[layer.ln1_b.clone()].fill(S::ZERO);
            p[layer.ln2_g.clone()].fill(S::ONE);
            p[layer.ln2_b.clone()].fill(S::ZERO);
        }
        for d in &self.head {
            d.init(rng, p);
        }
        if zero_head {
            self.head.last().expect("head output").zero(p);
        }
    }

    fn forward<S: Scalar>(&self, p: &[S], x: &[S], c: &mut TransformerCache<S>) -> S {
        let rows = x.len() / CHANNELS;
        self.forward_at(p, x, rows - 1, c)
    }

    fn backward<S: Scalar>(&self, p: &[S], x: &[S], c: &mut TransformerCache<S>, dy: S, g: &mut [S]) {
        let w = self.config.width;
        let rows = c.rows;
        let last = self.layers.len() - 1;

        // Head.
        let mut up = std::mem::take(&mut c.d_head_a);
        let mut down = std::mem::take(&mut c.d_head_b);
        up.clear();
        up.push(dy);
        for i in (0..self.head.len()).rev() {
            let input: &[S] = if i == 0 { &c.layers[last].out } else { &c.head_acts[i - 1] };
            down.clear();
            down.resize(self.head[i].n_in, S::ZERO);
            self.head[i].backward(p, input, &up, g, Some(&mut down));
            if i > 0 {
                relu_backward(&c.head_acts[i - 1], &mut down);
            }
            std::mem::swap(&mut up, &mut down);
        }
        let mut d_out = std::mem::take(&mut c.d_out);
        d_out.clone_from(&up);
        c.d_head_a = up;
        c.d_head_b = down;

        let mut d_in = std::mem::take(&mut c.d_in);
        let (mut d_q, mut d_k, mut d_v) = (
            std::mem::take(&mut c.d_q),
            std::mem::take(&mut c.d_k),
            std::mem::take(&mut c.d_v),
        );
        let (mut d_ctx, mut d_h1, mut d_r, mut d_ff, mut d_a) = (
            std::mem::take(&mut c.d_ctx),
            std::mem::take(&mut c.d_h1),
            std::mem::take(&mut c.d_r),
            std::mem::take(&mut c.d_ff),
            std::mem::take(&mut c.d_a),
        );
        for l in (0..self.layers.len()).rev() {
            let mut scratch = Scratch {
                d_q: &mut d_q,
                d_k: &mut d_k,
                d_v: &mut d_v,
                d_ctx: &mut d_ctx,
                d_h1: &mut d_h1,
                d_r: &mut d_r,
                d_ff: &mut d_ff,
                d_a: &mut d_a,
            };
            self.layer_backward(l, p, &c.layers[l], rows, &d_out, &mut d_in, g, &mut scratch);
            std::mem::swap(&mut d_out, &mut d_in);
        }
        // d_out now holds gradients of the embeddings.
        for t in 0..rows {
            self.input
                .backward(p, &x[t * CHANNELS..(t + 1) * CHANNELS], &d_out[t * w..(t + 1) * w], g, None);
        }
        c.d_out = d_out;
        c.d_in = d_in;
        c.d_q = d_q;
        c.d_k = d_k;
        c.d_v = d_v;
        c.d_ctx = d_ctx;
        c.d_h1 = d_h1;
        c.d_r = d_r;
        c.d_ff = d_ff;
        c.d_a = d_a;
    }
}
