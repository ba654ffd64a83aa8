//! Declarative run configuration read from TOML.

use std::path::Path;

use anyhow::Context;
use cybertom::dataset::{gamma_key, DatasetConfig, DEFAULT_GAMMAS};
use cybertom::eval::{SrScoring, TournamentConfig};
use serde::Deserialize;

use crate::UsageError;

pub const CONFIG_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    #[serde(default)]
    pub tournament: Option<TournamentConfig>,
    #[serde(default)]
    pub dataset: Option<DatasetConfig>,
    #[serde(default)]
    pub score: Option<ScoreSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoreSection {
    pub gammas: Vec<f64>,
    /// Remoteness coefficients; 0 is the unweighted distance.
    pub coefficients: Vec<f64>,
    pub floor: f64,
    /// Clusters for the hedging analysis.
    pub k: usize,
    pub seed: u64,
}

impl Default for ScoreSection {
    fn default() -> Self {
        let sr = SrScoring::default();
        ScoreSection {
            gammas: DEFAULT_GAMMAS.to_vec(),
            coefficients: sr.coefficients,
            floor: sr.floor,
            k: 4,
            seed: 0,
        }
    }
}

impl ScoreSection {
    pub fn scoring(&self) -> SrScoring {
        SrScoring {
            gammas: self.gammas.iter().map(|&g| gamma_key(g)).collect(),
            coefficients: self.coefficients.clone(),
            floor: self.floor,
        }
    }
}

pub fn parse(text: &str, origin: &str) -> anyhow::Result<ConfigFile> {
    let de = toml::Deserializer::parse(text).map_err(|e| UsageError(format!("{origin}: {e}")))?;
    let file: ConfigFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        UsageError(format!("{origin}: invalid value at '{path}': {}", e.into_inner().message()))
    })?;
    if file.schema_version != CONFIG_SCHEMA {
        return Err(UsageError(format!(
            "{origin}: unsupported schema_version {} (expected {CONFIG_SCHEMA})",
            file.schema_version
        ))
        .into());
    }
    Ok(file)
}

pub fn load(path: &Path) -> anyhow::Result<ConfigFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse(&text, &path.display().to_string())
}
