//! Tendon-driven plant dynamics, a surrogate position servo, and the data
//! collection pipeline that turns the two into force-labelled datasets.

pub mod config;
pub mod datagen;
pub mod error;
pub mod fsutil;
pub mod metrics;
pub mod plant;
pub mod rig;
pub mod servo;
pub mod store;
pub mod trajectory;

pub use error::{CoreError, Result};
