//! Concept fidelity, description-concept coordination, and multi-concept
//! disparity.
//!
//! The default scorer is analytic: the score of a sample for a tag set is the
//! posterior probability, under the unbiased data mixture, that the sample
//! came from a component carrying one of those tags. Other scorers plug in
//! through [`Scorer`] and [`ScorerRegistry`].

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{ConceptSpec, ConceptWorld, TagSet};

pub trait Scorer: Send + Sync {
    /// Fidelity of `x` to `tags`, in `[0, 1]`. Must be deterministic.
    fn evaluate(&self, world: &ConceptWorld, x: &DVector<f64>, tags: &TagSet) -> f64;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct AnalyticScorer;

impl Scorer for AnalyticScorer {
    fn evaluate(&self, world: &ConceptWorld, x: &DVector<f64>, tags: &TagSet) -> f64 {
        concept_score(world, x, tags)
    }
}

/// Posterior mass of the components whose tags meet `tags`; 0 when none do.
pub fn concept_score(world: &ConceptWorld, x: &DVector<f64>, tags: &TagSet) -> f64 {
    let resp = world.mixture().responsibilities(x);
    let matched: f64 = world
        .components()
        .iter()
        .zip(resp)
        .filter(|(c, _)| c.tags.iter().any(|t| tags.contains(t)))
        .map(|(_, r)| r)
        .sum();
    matched.clamp(0.0, 1.0)
}

/// Scores computed with a particular scorer.
#[derive(Clone, Copy)]
pub struct Scoring<'a> {
    pub world: &'a ConceptWorld,
    pub scorer: &'a dyn Scorer,
}

impl<'a> Scoring<'a> {
    pub fn analytic(world: &'a ConceptWorld) -> Self {
        Self {
            world,
            scorer: &AnalyticScorer,
        }
    }

    /// `max(score(primary tags), score(description tags))`.
    pub fn coordination(&self, x: &DVector<f64>, concept: &ConceptSpec) -> f64 {
        let primary = self.scorer.evaluate(self.world, x, &concept.primary_tags);
        if concept.description_tags == concept.primary_tags {
            return primary;
        }
        primary.max(self.scorer.evaluate(self.world, x, &concept.description_tags))
    }

    pub fn disparity(&self, x: &DVector<f64>, a: &ConceptSpec, b: &ConceptSpec) -> f64 {
        self.coordination(x, a) - self.coordination(x, b)
    }

    pub fn batch_disparity(&self, samples: &[DVector<f64>], a: &ConceptSpec, b: &ConceptSpec) -> Result<DisparityReport> {
        if samples.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = samples.len();
        let mut per_sample_d = Vec::with_capacity(n);
        let (mut sum_a, mut sum_b) = (0.0, 0.0);
        for x in samples {
            let sa = self.coordination(x, a);
            let sb = self.coordination(x, b);
            sum_a += sa;
            sum_b += sb;
            per_sample_d.push(sa - sb);
        }
        let mean_d = per_sample_d.iter().sum::<f64>() / n as f64;
        Ok(DisparityReport {
            per_sample_d,
            mean_d,
            s_a: sum_a / n as f64,
            s_b: sum_b / n as f64,
            n,
        })
    }
}

pub fn coordination_score(world: &ConceptWorld, x: &DVector<f64>, concept: &str) -> Result<f64> {
    let spec = world.concept(concept)?;
    Ok(Scoring::analytic(world).coordination(x, spec))
}

pub fn disparity(world: &ConceptWorld, x: &DVector<f64>, a: &str, b: &str) -> Result<f64> {
    let (a, b) = (world.concept(a)?, world.concept(b)?);
    Ok(Scoring::analytic(world).disparity(x, a, b))
}

pub fn batch_disparity(world: &ConceptWorld, samples: &[DVector<f64>], a: &str, b: &str) -> Result<DisparityReport> {
    let (a, b) = (world.concept(a)?, world.concept(b)?);
    Scoring::analytic(world).batch_disparity(samples, a, b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisparityReport {
    pub per_sample_d: Vec<f64>,
    pub mean_d: f64,
    /// Mean coordination score for the first concept.
    pub s_a: f64,
    /// Mean coordination score for the second concept.
    pub s_b: f64,
    pub n: usize,
}

impl DisparityReport {
    /// Batch-level disparity magnitude, `|s_a - s_b|`.
    pub fn abs_mean(&self) -> f64 {
        self.mean_d.abs()
    }
}

/// Scorers addressable by name from config. `analytic` is always present.
#[derive(Clone)]
pub struct ScorerRegistry {
    scorers: BTreeMap<String, Arc<dyn Scorer>>,
}

impl Default for ScorerRegistry {
    fn default() -> Self {
        let mut scorers: BTreeMap<String, Arc<dyn Scorer>> = BTreeMap::new();
        scorers.insert("analytic".into(), Arc::new(AnalyticScorer));
        Self { scorers }
    }
}

impl ScorerRegistry {
    pub fn register(&mut self, name: impl Into<String>, scorer: Arc<dyn Scorer>) {
        self.scorers.insert(name.into(), scorer);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Scorer>> {
        self.scorers
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Config(format!("no scorer named `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.scorers.keys().map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{coke_world, COKE, TEA_CUP};
    use crate::world::{build_world, tag_set, ComponentConfig, ConceptClass, ConceptConfig, WorldConfig};

    fn mirror_world() -> ConceptWorld {
        build_world(&WorldConfig {
            dim: 2,
            lambda_default: 1.0,
            components: vec![
                ComponentConfig::isotropic(0.5, &[-2.0, 0.0], 0.25, &["A"]),
                ComponentConfig::isotropic(0.5, &[2.0, 0.0], 0.25, &["B"]),
            ],
            concepts: vec![
                ConceptConfig::new("a", ConceptClass::Other, &["A"]),
                ConceptConfig::new("b", ConceptClass::Other, &["B"]),
            ],
        })
        .unwrap()
    }

    /// `{A}`, `{B}`, and a `{B_alt}` mode that only the description of `b` covers.
    fn alt_world() -> ConceptWorld {
        build_world(&WorldConfig {
            dim: 2,
            lambda_default: 1.0,
            components: vec![
                ComponentConfig::isotropic(0.4, &[-4.0, 0.0], 0.25, &["A"]),
                ComponentConfig::isotropic(0.3, &[4.0, 0.0], 0.25, &["B"]),
                ComponentConfig::isotropic(0.3, &[0.0, 4.0], 0.25, &["B_alt"]),
            ],
            concepts: vec![
                ConceptConfig::new("a", ConceptClass::Other, &["A"]),
                ConceptConfig::new("b", ConceptClass::Other, &["B"]).with_description(&["B", "B_alt"], "either look"),
            ],
        })
        .unwrap()
    }

    #[test]
    fn mirror_midpoint_scores_half() {
        let w = mirror_world();
        let x = DVector::zeros(2);
        assert!((concept_score(&w, &x, &tag_set(&["A"])) - 0.5).abs() < 1e-12);
        assert!((concept_score(&w, &x, &tag_set(&["B"])) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unmatched_tags_score_zero() {
        let w = mirror_world();
        assert_eq!(concept_score(&w, &DVector::zeros(2), &tag_set(&["Q"])), 0.0);
    }

    #[test]
    fn latent_mode_is_confidently_the_beverage() {
        let w = coke_world();
        let s = concept_score(&w, &DVector::from_vec(vec![-3.0, 0.0]), &tag_set(&["A"]));
        assert!(s >= 0.999, "{s}");
    }

    #[test]
    fn coordination_picks_up_description_modes() {
        let w = alt_world();
        let x = DVector::from_vec(vec![0.0, 4.0]);
        let b = w.concept("b").unwrap();
        let primary = concept_score(&w, &x, &b.primary_tags);
        let coord = coordination_score(&w, &x, "b").unwrap();
        assert!(primary < 1e-6, "{primary}");
        assert!(coord > 1.0 - 1e-6, "{coord}");
        // Same tags for primary and description: identical values.
        let a = coordination_score(&w, &x, "a").unwrap();
        assert_eq!(a, concept_score(&w, &x, &tag_set(&["A"])));
        assert!(matches!(coordination_score(&w, &x, "zz"), Err(Error::UnknownConcept(_))));
    }

    #[test]
    fn disparity_identity_and_antisymmetry() {
        let w = coke_world();
        let x = DVector::from_vec(vec![0.7, -0.2]);
        assert_eq!(disparity(&w, &x, COKE, COKE).unwrap(), 0.0);
        let ab = disparity(&w, &x, COKE, TEA_CUP).unwrap();
        let ba = disparity(&w, &x, TEA_CUP, COKE).unwrap();
        assert_eq!(ab, -ba);
    }

    #[test]
    fn joint_mode_has_small_disparity() {
        let w = coke_world();
        let d = disparity(&w, &DVector::from_vec(vec![3.0, -1.0]), COKE, TEA_CUP).unwrap();
        assert!(d.abs() <= 0.05, "{d}");
    }

    #[test]
    fn batch_aggregation() {
        let w = coke_world();
        let x = DVector::from_vec(vec![1.0, 0.5]);
        let single = batch_disparity(&w, std::slice::from_ref(&x), COKE, TEA_CUP).unwrap();
        assert_eq!(single.mean_d, disparity(&w, &x, COKE, TEA_CUP).unwrap());
        assert!(matches!(batch_disparity(&w, &[], COKE, TEA_CUP), Err(Error::EmptyBatch)));

        // Mirror images across the symmetric midpoint give D = +d and -d.
        let m = mirror_world();
        let p = DVector::from_vec(vec![0.1, 0.0]);
        let q = DVector::from_vec(vec![-0.1, 0.0]);
        let r = batch_disparity(&m, &[p, q], "a", "b").unwrap();
        assert!((r.per_sample_d[0] + r.per_sample_d[1]).abs() < 1e-12);
        assert!(r.mean_d.abs() < 1e-12);
    }

    #[test]
    fn registry_has_analytic_default() {
        let reg = ScorerRegistry::default();
        assert!(reg.get("analytic").is_ok());
        assert!(reg.get("clip").is_err());
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["analytic"]);
    }
}
