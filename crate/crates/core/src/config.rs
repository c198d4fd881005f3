//! Named hyperparameter profiles and TOML overrides.
//!
//! A profile bundles agent, pre-training, fine-tuning and search settings.
//! `paper` holds the published values; `desk` scales them down for a single
//! CPU. An override file has optional `[agent]`, `[pretrain]`, `[finetune]`
//! and `[search]` tables whose keys replace the profile's values; unknown
//! keys are rejected.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::AgentConfig;
use crate::error::{Error, Result};
use crate::search::SearchConfig;
use crate::train::TrainConfig;

/// Environment variable naming a default override file.
pub const CONFIG_ENV: &str = "CIRCOPT_CONFIG";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileName {
    Paper,
    Desk,
}

impl FromStr for ProfileName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(ProfileName::Paper),
            "desk" => Ok(ProfileName::Desk),
            other => Err(Error::Config(format!("unknown profile `{other}` (expected paper or desk)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Profile {
    pub agent: AgentConfig,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub search: SearchConfig,
}

impl Profile {
    pub fn named(name: ProfileName) -> Profile {
        match name {
            ProfileName::Paper => Profile {
                agent: AgentConfig::paper(),
                pretrain: TrainConfig::paper_pretrain(),
                finetune: TrainConfig::paper_finetune(),
                search: SearchConfig::paper(),
            },
            ProfileName::Desk => Profile {
                agent: AgentConfig::desk(),
                pretrain: TrainConfig::desk_pretrain(),
                finetune: TrainConfig::desk_finetune(),
                search: SearchConfig::desk(),
            },
        }
    }

    /// Apply overrides from TOML text.
    pub fn with_overrides(&self, text: &str) -> Result<Profile> {
        let bad = |e: &dyn std::fmt::Display| Error::Config(e.to_string());
        let overrides: toml::Table = toml::from_str(text).map_err(|e| bad(&e))?;
        let mut base = toml::Table::try_from(self).map_err(|e| bad(&e))?;
        for (section, value) in overrides {
            let Some(toml::Value::Table(target)) = base.get_mut(&section) else {
                return Err(Error::Config(format!("unknown config section `{section}`")));
            };
            let toml::Value::Table(entries) = value else {
                return Err(Error::Config(format!("config section `{section}` must be a table")));
            };
            for (k, v) in entries {
                if !target.contains_key(&k) {
                    return Err(Error::Config(format!("unknown key `{section}.{k}`")));
                }
                target.insert(k, v);
            }
        }
        let p: Profile = toml::Value::Table(base).try_into().map_err(|e| bad(&e))?;
        p.pretrain.validate()?;
        p.finetune.validate()?;
        p.search.validate()?;
        Ok(p)
    }

    pub fn load_overrides(&self, path: &Path) -> Result<Profile> {
        self.with_overrides(&std::fs::read_to_string(path)?)
    }
}
