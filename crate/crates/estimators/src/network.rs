//! The common interface of the three estimator architectures.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mlp::{Mlp, MlpCache, MlpConfig};
use crate::params::ParamLayout;
use crate::rnn::{Rnn, RnnCache, RnnConfig};
use crate::scalar::Scalar;
use crate::transformer::{Transformer, TransformerCache, TransformerConfig};

/// A differentiable map from one normalized window (rows oldest first,
/// `history × 3` values) to one normalized force.
pub trait Net: Send + Sync {
    type Cache<S: Scalar>: Default + Send;

    fn layout(&self) -> &ParamLayout;
    fn history(&self) -> usize;
    /// Fills parameters; `zero_head` zeroes the final layer so an untrained
    /// network predicts the output mean.
    fn init<S: Scalar, R: Rng>(&self, rng: &mut R, p: &mut [S], zero_head: bool);
    fn forward<S: Scalar>(&self, p: &[S], x: &[S], cache: &mut Self::Cache<S>) -> S;
    /// Accumulates dy·∂y/∂p into `grad`; requires the cache of the matching forward.
    fn backward<S: Scalar>(&self, p: &[S], x: &[S], cache: &mut Self::Cache<S>, dy: S, grad: &mut [S]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Mlp,
    Rnn,
    Transformer,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Mlp, Arch::Rnn, Arch::Transformer];

    pub fn name(self) -> &'static str {
        match self {
            Arch::Mlp => "mlp",
            Arch::Rnn => "rnn",
            Arch::Transformer => "transformer",
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            Arch::Mlp => 1,
            Arch::Rnn => 2,
            Arch::Transformer => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Arch> {
        Arch::ALL.into_iter().find(|a| a.tag() == tag)
    }
}

impl std::str::FromStr for Arch {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Arch::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown architecture `{s}` (expected mlp, rnn, or transformer)"))
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
pub enum ArchConfig {
    Mlp(MlpConfig),
    Rnn(RnnConfig),
    Transformer(TransformerConfig),
}

impl ArchConfig {
    pub fn default_for(arch: Arch) -> Self {
        match arch {
            Arch::Mlp => ArchConfig::Mlp(MlpConfig::default()),
            Arch::Rnn => ArchConfig::Rnn(RnnConfig::default()),
            Arch::Transformer => ArchConfig::Transformer(TransformerConfig::default()),
        }
    }

    pub fn arch(&self) -> Arch {
        match self {
            ArchConfig::Mlp(_) => Arch::Mlp,
            ArchConfig::Rnn(_) => Arch::Rnn,
            ArchConfig::Transformer(_) => Arch::Transformer,
        }
    }

    pub fn build(&self) -> Network {
        match self {
            ArchConfig::Mlp(c) => Network::Mlp(Mlp::new(c.clone())),
            ArchConfig::Rnn(c) => Network::Rnn(Rnn::new(c.clone())),
            ArchConfig::Transformer(c) => Network::Transformer(Transformer::new(c.clone())),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Network {
    Mlp(Mlp),
    Rnn(Rnn),
    Transformer(Transformer),
}

#[derive(Debug, Default)]
pub struct NetworkCache<S> {
    mlp: MlpCache<S>,
    rnn: RnnCache<S>,
    transformer: TransformerCache<S>,
}

impl Network {
    pub fn arch(&self) -> Arch {
        match self {
            Network::Mlp(_) => Arch::Mlp,
            Network::Rnn(_) => Arch::Rnn,
            Network::Transformer(_) => Arch::Transformer,
        }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total()
    }

    /// Transformer-only: output at an earlier row of the window.
    pub fn forward_at<S: Scalar>(&self, p: &[S], x: &[S], pos: usize, c: &mut NetworkCache<S>) -> Option<S> {
        match self {
            Network::Transformer(t) => Some(t.forward_at(p, x, pos, &mut c.transformer)),
            _ => None,
        }
    }
}

impl Net for Network {
    type Cache<S: Scalar> = NetworkCache<S>;

    fn layout(&self) -> &ParamLayout {
        match self {
            Network::Mlp(n) => n.layout(),
            Network::Rnn(n) => n.layout(),
            Network::Transformer(n) => n.layout(),
        }
    }

    fn history(&self) -> usize {
        match self {
            Network::Mlp(n) => n.history(),
            Network::Rnn(n) => n.history(),
            Network::Transformer(n) => n.history(),
        }
    }

    fn init<S: Scalar, R: Rng>(&self, rng: &mut R, p: &mut [S], zero_head: bool) {
        match self {
            Network::Mlp(n) => n.init(rng, p, zero_head),
            Network::Rnn(n) => n.init(rng, p, zero_head),
            Network::Transformer(n) => n.init(rng, p, zero_head),
        }
    }

    fn forward<S: Scalar>(&self, p: &[S], x: &[S], c: &mut NetworkCache<S>) -> S {
        match self {
            Network::Mlp(n) => n.forward(p, x, &mut c.mlp),
            Network::Rnn(n) => n.forward(p, x, &mut c.rnn),
            Network::Transformer(n) => n.forward(p, x, &mut c.transformer),
        }
    }

    fn backward<S: Scalar>(&self, p: &[S], x: &[S], c: &mut NetworkCache<S>, dy: S, g: &mut [S]) {
        match self {
            Network::Mlp(n) => n.backward(p, x, &mut c.mlp, dy, g),
            Network::Rnn(n) => n.backward(p, x, &mut c.rnn, dy, g),
            Network::Transformer(n) => n.backward(p, x, &mut c.transformer, dy, g),
        }
    }
}
