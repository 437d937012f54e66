//! TOML config files accepted by the subcommands.

use std::path::Path;

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tendonsim_core::config::{FingerConfig, PlantConfig, ServoConfig, SimRates, SystemsConfig};
use tendonsim_core::datagen::{sha256_hex, DatagenConfig};
use tendonsim_core::CoreError;
use tendonsim_estimators::{Arch, ArchConfig, TrainConfig};
use tendonsim_eval::EvalSetup;
use tendonsim_rl::{EnvConfig, PolicyConfig, PpoConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatagenFile {
    pub datagen: DatagenConfig,
    pub servo: ServoConfig,
    pub systems: SystemsConfig,
    pub rates: SimRates,
}

impl DatagenFile {
    pub fn validate(&self) -> Result<()> {
        self.datagen.validate("datagen")?;
        self.servo.validate("servo")?;
        self.systems.validate("systems")?;
        self.rates.validate("rates")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainFile {
    pub train: TrainConfig,
    /// Architecture hyperparameters; defaults for `--arch` when absent.
    pub model: Option<ArchConfig>,
}

impl TrainFile {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        Ok(())
    }

    pub fn arch_config(&self, arch: Arch) -> Result<ArchConfig> {
        match &self.model {
            None => Ok(ArchConfig::default_for(arch)),
            Some(c) if c.arch() == arch => Ok(c.clone()),
            Some(c) => Err(invalid("model.arch", format!("config describes `{}` but --arch is `{arch}`", c.arch()))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyFile {
    pub env: EnvConfig,
    pub policy: PolicyConfig,
    pub ppo: PpoConfig,
    pub rates: SimRates,
    pub finger: FingerConfig,
}

impl PolicyFile {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.ppo.validate()?;
        self.rates.validate("rates")?;
        PlantConfig::Finger(self.finger.clone()).validate("finger")?;
        if !(self.policy.fixed_std > 0.0 && self.policy.fixed_std.is_finite()) {
            return Err(invalid("policy.fixed_std", "must be positive".into()));
        }
        Ok(())
    }
}

fn invalid(field: &str, reason: String) -> anyhow::Error {
    CoreError::InvalidConfig {
        field: field.to_string(),
        reason,
    }
    .into()
}

pub fn validate_eval(setup: &EvalSetup) -> Result<()> {
    setup.validate()?;
    Ok(())
}

/// Parses `path`, or returns the defaults when no file is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

pub fn config_hash<T: Serialize>(config: &T) -> String {
    sha256_hex(serde_json::to_string(config).expect("config serializes").as_bytes())
}
