//! TOML run configuration. Every table and key is optional; unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use anyhow::Context;
use corrnet::synth::GenParams;
use corrnet::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Dataset root (output of gen-data, input of train/evaluate/ablate).
    pub data: Option<PathBuf>,
    /// Output directory of train/evaluate/ablate.
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub cases: usize,
    pub folds: usize,
    pub seed: u64,
    /// Points sampled per surface and case.
    pub samples: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            cases: 40,
            folds: 5,
            seed: 7,
            samples: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationSeeds {
    pub seeds: Vec<u64>,
}

impl Default for AblationSeeds {
    fn default() -> Self {
        Self { seeds: vec![0, 1, 2] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: Paths,
    pub data: DataConfig,
    pub generator: GenParams,
    pub train: TrainConfig,
    pub ablation: AblationSeeds,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            data: DataConfig::default(),
            generator: GenParams::default(),
            train: TrainConfig::desk(),
            ablation: AblationSeeds::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg = Self::parse(&text).map_err(|e| corrnet::Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Keys missing from `text` keep the values of [`RunConfig::default`],
    /// including inside tables that are only partly given.
    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        let user: toml::Table = toml::from_str(text)?;
        let mut base = toml::Table::try_from(Self::default()).expect("default config serializes");
        merge(&mut base, user);
        base.try_into()
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
