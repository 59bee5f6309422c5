//! Per-environment experiment defaults, read from the committed TOML files.

use serde::{Deserialize, Serialize};

use crate::adaptation::AdaptConfig;
use crate::envs::{LINEWORLD, TREASURE};
use crate::error::{Error, Result};
use crate::regularizers::{ActorConfig, Family};
use crate::trainer::TrainConfig;

pub const LINEWORLD_TOML: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/lineworld.toml"));
pub const TREASURE_TOML: &str = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/treasure.toml"));

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtaTable {
    pub mse: f64,
    pub cvae: f64,
    pub diffusion: f64,
}

impl EtaTable {
    pub fn get(&self, family: Family) -> f64 {
        match family {
            Family::Mse => self.mse,
            Family::Cvae => self.cvae,
            Family::Diffusion => self.diffusion,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CqlDefaults {
    pub alpha: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalDefaults {
    pub prefs: usize,
    pub episodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvDefaults {
    pub train: TrainConfig,
    pub eta: EtaTable,
    pub mo_cql: CqlDefaults,
    pub adapt: AdaptConfig,
    pub eval: EvalDefaults,
}

impl EnvDefaults {
    pub fn parse(text: &str) -> Result<Self> {
        let d: Self = toml::from_str(text).map_err(|e| Error::InvalidConfiguration(e.to_string()))?;
        d.train.validate()?;
        d.adapt.validate()?;
        Ok(d)
    }

    pub fn builtin(env_name: &str) -> Result<Self> {
        match env_name {
            LINEWORLD => Self::parse(LINEWORLD_TOML),
            TREASURE => Self::parse(TREASURE_TOML),
            other => Err(Error::invalid(format!("no built-in defaults for `{other}`"))),
        }
    }

    /// Training config for `family` with that family's η.
    pub fn train_config(&self, family: Family, theta: f64, iterations: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            actor: ActorConfig {
                family,
                ..self.train.actor.clone()
            },
            eta: Some(self.eta.get(family)),
            theta,
            total_iterations: iterations,
            seed,
            ..self.train.clone()
        }
    }
}
