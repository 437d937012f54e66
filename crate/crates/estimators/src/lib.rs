//! Tendon-force estimators: three network architectures with hand-written
//! backpropagation, their training loop, and a self-describing checkpoint format.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod mlp;
pub mod model;
pub mod network;
pub mod ops;
pub mod params;
pub mod rnn;
pub mod scalar;
pub mod train;
pub mod transformer;
pub mod window;

pub use error::{EstimatorError, Result};
pub use model::{EstimatorModel, InferenceScratch, ModelMeta};
pub use train::{train_estimator, EpochLog, TrainConfig, TrainOutcome};
pub use network::{Arch, ArchConfig, Net, Network, NetworkCache};
pub use window::{window_from_log, HistoryWindow, Normalizer, CHANNELS, HISTORY, STRIDE};
