//! History windows and normalization statistics.

use serde::{Deserialize, Serialize};
use tendonsim_core::datagen::{Episode, SampleRecord};

use crate::error::{EstimatorError, Result};
use crate::scalar::Scalar;

/// Values per row: (θ_d, θ, θ̇).
pub const CHANNELS: usize = 3;
/// Rows per window.
pub const HISTORY: usize = 30;
/// Log records between consecutive rows (80 Hz log, 20 Hz window).
pub const STRIDE: usize = 4;

/// `rows × 3` observations, oldest first, flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryWindow {
    pub values: Vec<f64>,
}

impl HistoryWindow {
    pub fn from_rows(rows: &[[f64; CHANNELS]]) -> Self {
        Self {
            values: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.values.len() / CHANNELS
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * CHANNELS..(i + 1) * CHANNELS]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

pub fn observation(r: &SampleRecord) -> [f64; CHANNELS] {
    [r.theta_d, r.theta, r.theta_dot]
}

/// Window of `history` rows taken every `stride` records and ending at
/// `t_index`. Rows before the first record repeat the first record.
pub fn window_from_log(records: &[SampleRecord], t_index: usize, history: usize, stride: usize) -> HistoryWindow {
    let mut values = Vec::with_capacity(history * CHANNELS);
    for row in 0..history {
        let back = (history - 1 - row) * stride;
        let idx = t_index.saturating_sub(back);
        values.extend_from_slice(&observation(&records[idx]));
    }
    HistoryWindow { values }
}

/// Per-channel input statistics and scalar output statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub input_mean: [f64; CHANNELS],
    pub input_std: [f64; CHANNELS],
    pub output_mean: f64,
    pub output_std: f64,
}

pub const STD_FLOOR: f64 = 1e-6;

fn floored(std: f64) -> f64 {
    if std < STD_FLOOR {
        1.0
    } else {
        std
    }
}

impl Normalizer {
    pub fn identity() -> Self {
        Self {
            input_mean: [0.0; CHANNELS],
            input_std: [1.0; CHANNELS],
            output_mean: 0.0,
            output_std: 1.0,
        }
    }

    /// Population statistics over every record of `episodes`.
    pub fn fit<'a>(episodes: impl IntoIterator<Item = &'a Episode>) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = [0.0; CHANNELS + 1];
        let mut sq = [0.0; CHANNELS + 1];
        let episodes: Vec<&Episode> = episodes.into_iter().collect();
        for ep in &episodes {
            for r in &ep.records {
                let o = observation(r);
                for c in 0..CHANNELS {
                    sum[c] += o[c];
                }
                sum[CHANNELS] += r.force;
                n += 1;
            }
        }
        if n == 0 {
            return Err(EstimatorError::EmptyDataset("no records to fit normalization".into()));
        }
        let mean = sum.map(|s| s / n as f64);
        for ep in &episodes {
            for r in &ep.records {
                let o = observation(r);
                for c in 0..CHANNELS {
                    sq[c] += (o[c] - mean[c]).powi(2);
                }
                sq[CHANNELS] += (r.force - mean[CHANNELS]).powi(2);
            }
        }
        let std = sq.map(|s| floored((s / n as f64).sqrt()));
        Ok(Self {
            input_mean: [mean[0], mean[1], mean[2]],
            input_std: [std[0], std[1], std[2]],
            output_mean: mean[CHANNELS],
            output_std: std[CHANNELS],
        })
    }

    pub fn normalize_row<S: Scalar>(&self, row: &[f64], out: &mut [S]) {
        for c in 0..CHANNELS {
            out[c] = S::from_f64((row[c] - self.input_mean[c]) / self.input_std[c]);
        }
    }

    pub fn normalize_into<S: Scalar>(&self, values: &[f64], out: &mut Vec<S>) {
        out.clear();
        out.resize(values.len(), S::ZERO);
        for (src, dst) in values.chunks_exact(CHANNELS).zip(out.chunks_exact_mut(CHANNELS)) {
            self.normalize_row(src, dst);
        }
    }

    pub fn normalize_target(&self, force: f64) -> f64 {
        (force - self.output_mean) / self.output_std
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        y * self.output_std + self.output_mean
    }

    pub fn is_valid(&self) -> bool {
        self.input_std.iter().chain([&self.output_std]).all(|s| s.is_finite() && *s >= STD_FLOOR)
            && self.input_mean.iter().chain([&self.output_mean]).all(|m| m.is_finite())
    }
}

/// Location of one training sample: the window ending at `index` of `episode`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowRef {
    pub episode: u32,
    pub index: u32,
}

/// Windows of a fixed set of episodes, materialized in normalized form on demand.
#[derive(Debug)]
pub struct WindowPool<'a> {
    pub episodes: Vec<&'a Episode>,
    pub refs: Vec<WindowRef>,
    pub history: usize,
}

impl<'a> WindowPool<'a> {
    /// Every record index of every episode, advanced by `step` records.
    pub fn new(episodes: Vec<&'a Episode>, history: usize, step: usize) -> Self {
        let step = step.max(1);
        let mut refs = Vec::new();
        for (e, ep) in episodes.iter().enumerate() {
            for i in (0..ep.records.len()).step_by(step) {
                refs.push(WindowRef {
                    episode: e as u32,
                    index: i as u32,
                });
            }
        }
        Self {
            episodes,
            refs,
            history,
        }
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn target(&self, w: WindowRef) -> f64 {
        self.episodes[w.episode as usize].records[w.index as usize].force
    }

    pub fn window(&self, w: WindowRef) -> HistoryWindow {
        window_from_log(&self.episodes[w.episode as usize].records, w.index as usize, self.history, STRIDE)
    }

    /// Normalized window written into `out` without intermediate allocation.
    pub fn normalized<S: Scalar>(&self, w: WindowRef, norm: &Normalizer, out: &mut Vec<S>) {
        let records = &self.episodes[w.episode as usize].records;
        out.clear();
        out.resize(self.history * CHANNELS, S::ZERO);
        for row in 0..self.history {
            let back = (self.history - 1 - row) * STRIDE;
            let idx = (w.index as usize).saturating_sub(back);
            norm.normalize_row(&observation(&records[idx]), &mut out[row * CHANNELS..(row + 1) * CHANNELS]);
        }
    }
}
