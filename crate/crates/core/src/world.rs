//! The concept world: a Gaussian mixture whose components carry concept
//! tags, with co-occurrence bias expressed through the component weights.
//!
//! Prompt conditioning is modelled as an exponential tilt on the number of
//! prompt tags a component carries, restricted to components sharing at
//! least one tag with the prompt. With a finite tilt the sampler keeps
//! leaking mass into components that only carry part of the prompt, which
//! is what lets a latent concept displace a requested one.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{Gaussian, Mixture};

pub type TagSet = BTreeSet<String>;

const INPUT_WEIGHT_TOL: f64 = 1e-6;
const MAX_ABS_MEAN: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConceptClass {
    Content,
    Container,
    Background,
    Location,
    Storage,
    Other,
}

impl ConceptClass {
    /// Classes that frame another concept and are drawn before it.
    pub fn is_framing(self) -> bool {
        matches!(
            self,
            ConceptClass::Container
                | ConceptClass::Background
                | ConceptClass::Location
                | ConceptClass::Storage
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConceptId {
    pub name: String,
    pub class: ConceptClass,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptSpec {
    pub id: ConceptId,
    pub primary_tags: TagSet,
    pub description_tags: TagSet,
    #[serde(default)]
    pub description_text: String,
}

impl ConceptSpec {
    pub fn name(&self) -> &str {
        &self.id.name
    }
}

#[derive(Clone, Debug)]
pub struct MixtureComponent {
    pub gaussian: Gaussian,
    pub tags: TagSet,
}

impl MixtureComponent {
    pub fn weight(&self) -> f64 {
        self.gaussian.weight
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.gaussian.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.gaussian.covariance
    }

    fn overlap(&self, tags: &TagSet) -> usize {
        self.tags.intersection(tags).count()
    }
}

#[derive(Clone, Debug)]
pub struct ConceptWorld {
    dim: usize,
    components: Vec<MixtureComponent>,
    concepts: Vec<ConceptSpec>,
    lambda_default: f64,
}

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Diagonal of the covariance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov_diag: Option<Vec<f64>>,
    /// Full covariance, row-major, `dim * dim` entries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<Vec<f64>>,
    pub tags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptConfig {
    pub name: String,
    pub class: ConceptClass,
    pub primary_tags: Vec<String>,
    /// Defaults to the primary tags.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description_tags: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description_text: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldConfig {
    pub dim: usize,
    #[serde(default = "default_lambda")]
    pub lambda_default: f64,
    pub components: Vec<ComponentConfig>,
    #[serde(default)]
    pub concepts: Vec<ConceptConfig>,
}

fn default_lambda() -> f64 {
    2.0
}

impl ComponentConfig {
    /// Isotropic helper used by presets and tests.
    pub fn isotropic(weight: f64, mean: &[f64], variance: f64, tags: &[&str]) -> Self {
        Self {
            weight,
            mean: mean.to_vec(),
            cov_diag: Some(vec![variance; mean.len()]),
            cov: None,
            tags: tags.iter().map(|t| t.to_string()).collect(),
        }
    }
}

impl ConceptConfig {
    pub fn new(name: &str, class: ConceptClass, primary: &[&str]) -> Self {
        Self {
            name: name.into(),
            class,
            primary_tags: primary.iter().map(|t| t.to_string()).collect(),
            description_tags: None,
            description_text: String::new(),
        }
    }

    pub fn with_description(mut self, tags: &[&str], text: &str) -> Self {
        self.description_tags = Some(tags.iter().map(|t| t.to_string()).collect());
        self.description_text = text.into();
        self
    }
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

/// Validates a world description. Weights within 1e-6 of summing to one are
/// renormalized exactly; anything further off is rejected.
pub fn build_world(config: &WorldConfig) -> Result<ConceptWorld> {
    let d = config.dim;
    if d == 0 {
        return Err(Error::BadParameter("dim must be at least 1".into()));
    }
    if !(config.lambda_default.is_finite() && config.lambda_default >= 0.0) {
        return Err(Error::BadParameter("lambda_default must be finite and >= 0".into()));
    }
    if config.components.is_empty() {
        return Err(Error::BadParameter("world has no components".into()));
    }

    for (index, c) in config.components.iter().enumerate() {
        if !(c.weight > 0.0 && c.weight.is_finite()) {
            return Err(Error::NonPositiveWeight { index, weight: c.weight });
        }
    }
    let sum: f64 = config.components.iter().map(|c| c.weight).sum();
    if (sum - 1.0).abs() > INPUT_WEIGHT_TOL {
        return Err(Error::WeightSumMismatch { sum });
    }

    let mut components = Vec::with_capacity(config.components.len());
    for (index, c) in config.components.iter().enumerate() {
        if c.mean.len() != d {
            return Err(Error::BadParameter(format!(
                "component {index}: mean has {} entries, dim is {d}",
                c.mean.len()
            )));
        }
        if c.mean.iter().any(|m| !m.is_finite() || m.abs() > MAX_ABS_MEAN) {
            return Err(Error::BadParameter(format!(
                "component {index}: mean entries must be finite with |mu| <= {MAX_ABS_MEAN}"
            )));
        }
        if c.tags.is_empty() {
            return Err(Error::BadParameter(format!("component {index}: no tags")));
        }
        let cov = match (&c.cov_diag, &c.cov) {
            (Some(diag), None) if diag.len() == d => DMatrix::from_diagonal(&DVector::from_vec(diag.clone())),
            (None, Some(full)) if full.len() == d * d => DMatrix::from_row_slice(d, d, full),
            _ => {
                return Err(Error::BadParameter(format!(
                    "component {index}: give exactly one of cov_diag ({d} entries) or cov ({} entries)",
                    d * d
                )))
            }
        };
        let gaussian = Gaussian::new(c.weight / sum, DVector::from_vec(c.mean.clone()), cov)
            .ok_or(Error::NonSpdCovariance { index })?;
        components.push(MixtureComponent {
            gaussian,
            tags: c.tags.iter().cloned().collect(),
        });
    }

    let mut concepts: Vec<ConceptSpec> = Vec::with_capacity(config.concepts.len());
    for c in &config.concepts {
        if c.name.trim().is_empty() {
            return Err(Error::BadParameter("concept with empty name".into()));
        }
        if concepts.iter().any(|k| k.id.name == c.name) {
            return Err(Error::BadParameter(format!("duplicate concept `{}`", c.name)));
        }
        let primary: TagSet = c.primary_tags.iter().cloned().collect();
        if primary.is_empty() {
            return Err(Error::BadParameter(format!("concept `{}` has no primary tags", c.name)));
        }
        let description: TagSet = match &c.description_tags {
            Some(tags) => tags.iter().cloned().collect(),
            None => primary.clone(),
        };
        if !primary.is_subset(&description) {
            return Err(Error::BadParameter(format!(
                "concept `{}`: primary tags must be contained in description tags",
                c.name
            )));
        }
        if !components.iter().any(|k| k.overlap(&primary) > 0) {
            return Err(Error::UnknownTagInConcept { concept: c.name.clone() });
        }
        concepts.push(ConceptSpec {
            id: ConceptId {
                name: c.name.clone(),
                class: c.class,
            },
            primary_tags: primary,
            description_tags: description,
            description_text: c.description_text.clone(),
        });
    }

    Ok(ConceptWorld {
        dim: d,
        components,
        concepts,
        lambda_default: config.lambda_default,
    })
}

impl ConceptWorld {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn concepts(&self) -> &[ConceptSpec] {
        &self.concepts
    }

    pub fn lambda_default(&self) -> f64 {
        self.lambda_default
    }

    pub fn weights(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.weight()).collect()
    }

    pub fn concept(&self, name: &str) -> Result<&ConceptSpec> {
        self.concepts
            .iter()
            .find(|c| c.id.name == name)
            .ok_or_else(|| Error::UnknownConcept(name.to_string()))
    }

    /// The data mixture (time zero).
    pub fn mixture(&self) -> Mixture {
        Mixture {
            dim: self.dim,
            components: self.components.iter().map(|c| c.gaussian.clone()).collect(),
        }
    }

    /// Union of the primary tags of the named concepts.
    pub fn prompt_tags<S: AsRef<str>>(&self, prompt: &[S]) -> Result<TagSet> {
        let mut tags = TagSet::new();
        for name in prompt {
            tags.extend(self.concept(name.as_ref())?.primary_tags.iter().cloned());
        }
        Ok(tags)
    }

    /// Total unbiased weight of components carrying any of `tags`.
    pub fn tag_mass(&self, tags: &TagSet) -> f64 {
        self.components
            .iter()
            .filter(|c| c.overlap(tags) > 0)
            .map(|c| c.weight())
            .sum()
    }

    /// Returns the same world with every weight replaced; geometry untouched.
    fn with_weights(&self, weights: &[f64]) -> ConceptWorld {
        let mut out = self.clone();
        for (c, w) in out.components.iter_mut().zip(weights) {
            c.gaussian.weight = *w;
        }
        out
    }

    pub fn to_config(&self) -> WorldConfig {
        WorldConfig {
            dim: self.dim,
            lambda_default: self.lambda_default,
            components: self
                .components
                .iter()
                .map(|c| ComponentConfig {
                    weight: c.weight(),
                    mean: c.mean().iter().copied().collect(),
                    cov_diag: None,
                    cov: Some(c.covariance().transpose().iter().copied().collect()),
                    tags: c.tags.iter().cloned().collect(),
                })
                .collect(),
            concepts: self
                .concepts
                .iter()
                .map(|c| ConceptConfig {
                    name: c.id.name.clone(),
                    class: c.id.class,
                    primary_tags: c.primary_tags.iter().cloned().collect(),
                    description_tags: Some(c.description_tags.iter().cloned().collect()),
                    description_text: c.description_text.clone(),
                })
                .collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Conditioning and the correctness oracle
// ---------------------------------------------------------------------------

/// Prompt-conditioned world: components sharing no tag with the prompt are
/// switched off, the rest are reweighted by `exp(lambda * overlap)` and
/// renormalized. Means and covariances are unchanged.
pub fn tilted_conditional<S: AsRef<str>>(
    world: &ConceptWorld,
    prompt: &[S],
    lambda: f64,
) -> Result<ConceptWorld> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::BadParameter(format!("tilt strength {lambda} must be finite and >= 0")));
    }
    let tags = world.prompt_tags(prompt)?;
    let overlaps: Vec<usize> = world.components.iter().map(|c| c.overlap(&tags)).collect();
    let max_overlap = overlaps.iter().copied().max().unwrap_or(0);
    if max_overlap == 0 {
        return Err(Error::EmptySupport);
    }
    // Factor out the largest exponent so large lambda cannot overflow.
    let raw: Vec<f64> = world
        .components
        .iter()
        .zip(&overlaps)
        .map(|(c, &o)| {
            if o == 0 {
                0.0
            } else {
                c.weight() * (lambda * (o as f64 - max_overlap as f64)).exp()
            }
        })
        .collect();
    let norm: f64 = raw.iter().sum();
    let weights: Vec<f64> = raw.iter().map(|w| w / norm).collect();
    Ok(world.with_weights(&weights))
}

/// Index of the component with the largest weighted density at `x` under
/// the unbiased world. Ties go to the lowest index.
pub fn assign_component(world: &ConceptWorld, x: &DVector<f64>) -> usize {
    let terms = world.mixture().component_log_terms(x);
    let mut best = 0;
    for (k, t) in terms.iter().enumerate().skip(1) {
        if *t > terms[best] {
            best = k;
        }
    }
    best
}

/// Whether the component `x` falls in carries a primary tag of both concepts.
pub fn is_correct(world: &ConceptWorld, x: &DVector<f64>, pair: (&str, &str)) -> Result<bool> {
    let a = world.concept(pair.0)?;
    let b = world.concept(pair.1)?;
    let tags = &world.components[assign_component(world, x)].tags;
    Ok(a.primary_tags.iter().any(|t| tags.contains(t)) && b.primary_tags.iter().any(|t| tags.contains(t)))
}

/// Per-component counts of `assign_component` over a batch.
pub fn component_histogram<'a, I>(world: &ConceptWorld, samples: I) -> Vec<usize>
where
    I: IntoIterator<Item = &'a DVector<f64>>,
{
    let mut counts = vec![0; world.components.len()];
    for x in samples {
        counts[assign_component(world, x)] += 1;
    }
    counts
}

pub fn tag_set<S: AsRef<str>>(tags: &[S]) -> TagSet {
    tags.iter().map(|t| t.as_ref().to_string()).collect()
}

/// Named worlds, looked up by key.
pub type WorldMap = BTreeMap<String, WorldConfig>;
