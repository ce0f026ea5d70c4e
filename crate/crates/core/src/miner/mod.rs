//! The dataset-mining loop: seed patterns, generator-driven pair
//! expansion, pattern discovery, pattern merging, and verification runs
//! rated on a five-level scale.

mod generator;
mod merge;
mod parse;
mod verify;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use generator::{
    discover_patterns, generate_pairs, pair_prompt, pattern_prompt, BiasedNoun, Exchange, Generator, LlmGenerator,
    MockGenerator, NounFamily, PairRequest, PatternRequest, Vocabulary,
};
pub use merge::merge_patterns;
pub use parse::{parse_generator_reply, parse_pattern_reply, PairCandidate, PatternCandidate};
pub use verify::{verify_pair, verify_pair_with_search, BoundPair, VerifyMode, VerifySettings, WorldCatalog, VOCAB_WORLD};

pub const PROMPT_VARIANTS: usize = 5;
pub const SAMPLES_PER_VARIANT: usize = 4;
pub const SAMPLES_PER_PAIR: usize = PROMPT_VARIANTS * SAMPLES_PER_VARIANT;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternOrigin {
    HumanSeed,
    GeneratorPhase3,
    MergedPhase4,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pattern {
    pub name: String,
    pub origin: PatternOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parents: Option<(String, String)>,
    pub lcmis_flag: bool,
}

impl Pattern {
    pub fn seed(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            origin: PatternOrigin::HumanSeed,
            parents: None,
            lcmis_flag: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    HumanSeed,
    Generated,
}

/// Where a pair's two concepts live: world key plus concept names in it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Binding {
    pub world: String,
    pub a: String,
    pub b: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptPair {
    pub a_name: String,
    pub b_name: String,
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binding: Option<Binding>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<Level>,
    pub provenance: Provenance,
}

impl ConceptPair {
    pub fn label(&self) -> String {
        format!("{}, {}", self.a_name, self.b_name)
    }

    /// Lowercased nouns, for duplicate checks.
    pub fn nouns(&self) -> [String; 2] {
        [normalize_noun(&self.a_name), normalize_noun(&self.b_name)]
    }
}

pub(crate) fn normalize_noun(noun: &str) -> String {
    noun.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Five-level rating of a pair; 1 is fully aligned, 5 means no correct
/// sample out of twenty.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Level(u8);

impl Level {
    pub fn new(value: u8) -> Result<Self> {
        if (1..=5).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::OutOfRange {
                value: value as i64,
                range: "1..=5",
            })
        }
    }

    pub fn value(self) -> u8 {
        self.0
    }
}

impl TryFrom<u8> for Level {
    type Error = Error;
    fn try_from(value: u8) -> Result<Self> {
        Level::new(value)
    }
}

impl From<Level> for u8 {
    fn from(level: Level) -> u8 {
        level.0
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Level {}", self.0)
    }
}

/// Buckets of correct samples out of twenty: 0 -> 5, 1-5 -> 4, 6-10 -> 3,
/// 11-15 -> 2, 16-20 -> 1.
pub fn rate_level(correct_count: u32) -> Result<Level> {
    let value = match correct_count {
        0 => 5,
        1..=5 => 4,
        6..=10 => 3,
        11..=15 => 2,
        16..=20 => 1,
        _ => {
            return Err(Error::OutOfRange {
                value: correct_count as i64,
                range: "0..=20",
            })
        }
    };
    Ok(Level(value))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub a_name: String,
    pub b_name: String,
    pub pattern: String,
    pub mode: VerifyMode,
    /// One descriptor per prompt variant (its seed group).
    pub prompt_variants: Vec<String>,
    pub samples_per_variant: usize,
    pub correct_count: u32,
    pub level: Level,
    pub seed: u64,
    /// Phase-one step count used in `moce` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n1: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn level_buckets() {
        assert_eq!(rate_level(0).unwrap().value(), 5);
        assert_eq!(rate_level(7).unwrap().value(), 3);
        assert_eq!(rate_level(20).unwrap().value(), 1);
        assert!(matches!(rate_level(21), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn level_is_monotone() {
        let values: Vec<u8> = (0..=20).map(|c| rate_level(c).unwrap().value()).collect();
        assert!(values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn level_serde_rejects_out_of_range() {
        assert_eq!(serde_json::to_string(&Level::new(3).unwrap()).unwrap(), "3");
        assert!(serde_json::from_str::<Level>("6").is_err());
        assert!(serde_json::from_str::<Level>("0").is_err());
    }

    #[test]
    fn noun_normalization() {
        assert_eq!(normalize_noun("  Tea   Cup "), "tea cup");
    }
}
