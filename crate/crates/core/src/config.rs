//! Lab configuration: one TOML or JSON file for every command.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diffusion::SamplerSettings;
use crate::error::{Error, Result};
use crate::miner::{VerifySettings, Vocabulary, WorldCatalog};
use crate::moce::{MoceSettings, SearchConfig};
use crate::presets::coke_world_config;
use crate::world::WorldConfig;

/// Catalog key of the config's main world.
pub const MAIN_WORLD: &str = "main";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    #[default]
    Mock,
    Http,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::Mock,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: "LCMIS_API_KEY".into(),
        }
    }
}

/// A human-provided starting pair, optionally bound to a configured world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedPair {
    pub a: String,
    pub b: String,
    pub pattern: String,
    #[serde(default)]
    pub world: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MiningConfig {
    pub generator: GeneratorConfig,
    pub vocabulary: Vocabulary,
    pub seed_patterns: Vec<String>,
    pub seed_pairs: Vec<SeedPair>,
    /// Pairs requested per pattern in one expansion round.
    pub pairs_per_request: usize,
    /// Patterns requested in one discovery round.
    pub new_patterns: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            generator: GeneratorConfig::default(),
            vocabulary: Vocabulary::demo(),
            seed_patterns: vec![
                "Beverage and erroneous container".into(),
                "Jewelry and improper storage".into(),
            ],
            seed_pairs: vec![SeedPair {
                a: "iced coke".into(),
                b: "tea cup".into(),
                pattern: "Beverage and erroneous container".into(),
                world: Some(MAIN_WORLD.into()),
            }],
            pairs_per_request: 30,
            new_patterns: 9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Phase-one fractions of the step count, each in `[0, 1]`.
    pub grid: Vec<f64>,
    pub samples: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grid: (0..=8).map(|i| i as f64 / 8.0).collect(),
            samples: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabConfig {
    pub world: WorldConfig,
    pub worlds: BTreeMap<String, WorldConfig>,
    pub sampler: SamplerSettings,
    pub moce: MoceSettings,
    pub lambda: f64,
    pub scorer: String,
    /// Fixed first concept for the two-phase order; the heuristic decides
    /// when absent.
    pub first: Option<String>,
    pub mining: MiningConfig,
    pub sweep: SweepConfig,
}

impl Default for LabConfig {
    fn default() -> Self {
        Self {
            world: coke_world_config(),
            worlds: BTreeMap::new(),
            sampler: SamplerSettings::default(),
            moce: MoceSettings::default(),
            lambda: 2.0,
            scorer: "analytic".into(),
            first: None,
            mining: MiningConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl LabConfig {
    /// Reads TOML or JSON, chosen by the file extension.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        match ext {
            "toml" => Self::from_toml(&text),
            "json" => serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
            _ => Err(Error::Config(format!("{}: expected a .toml or .json file", path.display()))),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// SHA-256 over the canonical JSON form (sorted keys) of the parsed
    /// config, so formatting and key order do not matter.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn verify_settings(&self) -> VerifySettings {
        VerifySettings {
            sampler: self.sampler.clone(),
            moce: self.moce.clone(),
            lambda: self.lambda,
        }
    }

    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            sampler: self.sampler.clone(),
            moce: self.moce.clone(),
            lambda: self.lambda,
        }
    }

    /// Named worlds plus the main world under [`MAIN_WORLD`].
    pub fn catalog(&self) -> WorldCatalog {
        let mut worlds = self.worlds.clone();
        worlds.insert(MAIN_WORLD.into(), self.world.clone());
        WorldCatalog {
            worlds,
            vocabulary: self.mining.vocabulary.clone(),
        }
    }
}
