//! Two-phase sampling with a searched switch step.
//!
//! Phase one denoises under the concept that tends to get lost, recording
//! every intermediate latent. Phase two picks one of those latents, at
//! `t = T - n1`, and finishes under the full prompt. The number of phase-one
//! steps `n1` is found by bisection on the batch disparity between the two
//! concepts.

use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::diffusion::{sample_batch, ConditionedPath, NoiseSchedule, PreparatoryList, SamplerSettings};
use crate::error::{Error, Result};
use crate::llm::TextCompletion;
use crate::scoring::{DisparityReport, Scorer, Scoring};
use crate::world::{ConceptClass, ConceptWorld};

// ---------------------------------------------------------------------------
// Order
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderRationale {
    ContainerFirst,
    BackgroundFirst,
    OverlookedFirst,
    ProviderOverride,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderDecision {
    pub first: String,
    pub second: String,
    pub rationale: OrderRationale,
}

#[derive(Clone, Default)]
pub enum OrderProvider {
    #[default]
    Heuristic,
    /// Always draw this concept first.
    Fixed(String),
    /// Ask a language model; falls back to the heuristic when the reply does
    /// not name exactly one of the two concepts.
    Completion(Arc<dyn TextCompletion>),
}

impl std::fmt::Debug for OrderProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OrderProvider::Heuristic => write!(f, "Heuristic"),
            OrderProvider::Fixed(name) => write!(f, "Fixed({name:?})"),
            OrderProvider::Completion(_) => write!(f, "Completion(..)"),
        }
    }
}

pub fn order_prompt(a: &str, b: &str) -> String {
    format!(
        "Two visual concepts appear in one picture: A is \"{a}\" and B is \"{b}\", as in \
         \"{b} with {a}\".\n\
         Give a very short visual description of each concept on its own (colour, shape, \
         texture; no background, no other objects).\n\
         Then say which concept should be drawn first, as a line of the form \
         \"Draw the <concept> first\". Containers and backgrounds are drawn before what \
         they hold or surround."
    )
}

/// The concept named in a "draw ... first" line, if exactly one matches.
pub fn parse_order_reply<'p>(reply: &str, pair: (&'p str, &'p str)) -> Option<&'p str> {
    let re = Regex::new(r"(?i)draw\s+(?:the\s+|an?\s+)?(.+?)\s+first").expect("static regex");
    for cap in re.captures_iter(reply) {
        let named = cap[1].to_lowercase();
        let hit_a = named.contains(&pair.0.to_lowercase());
        let hit_b = named.contains(&pair.1.to_lowercase());
        match (hit_a, hit_b) {
            (true, false) => return Some(pair.0),
            (false, true) => return Some(pair.1),
            _ => continue,
        }
    }
    None
}

fn heuristic_order(world: &ConceptWorld, a: &str, b: &str) -> Result<OrderDecision> {
    let ca = world.concept(a)?;
    let cb = world.concept(b)?;
    let decision = |first: &str, second: &str, rationale| OrderDecision {
        first: first.to_string(),
        second: second.to_string(),
        rationale,
    };
    let framing_rationale = |class: ConceptClass| match class {
        ConceptClass::Background | ConceptClass::Location => OrderRationale::BackgroundFirst,
        _ => OrderRationale::ContainerFirst,
    };
    match (ca.id.class.is_framing(), cb.id.class.is_framing()) {
        (true, false) => return Ok(decision(a, b, framing_rationale(ca.id.class))),
        (false, true) => return Ok(decision(b, a, framing_rationale(cb.id.class))),
        _ => {}
    }
    let mass_a = world.tag_mass(&ca.primary_tags);
    let mass_b = world.tag_mass(&cb.primary_tags);
    if mass_b < mass_a {
        Ok(decision(b, a, OrderRationale::OverlookedFirst))
    } else {
        Ok(decision(a, b, OrderRationale::OverlookedFirst))
    }
}

/// Which concept of `pair` is introduced alone in phase one.
pub fn decide_order(pair: (&str, &str), world: &ConceptWorld, provider: &OrderProvider) -> Result<OrderDecision> {
    let (a, b) = pair;
    world.concept(a)?;
    world.concept(b)?;
    let overridden = |first: &str| OrderDecision {
        first: first.to_string(),
        second: if first == a { b } else { a }.to_string(),
        rationale: OrderRationale::ProviderOverride,
    };
    match provider {
        OrderProvider::Heuristic => heuristic_order(world, a, b),
        OrderProvider::Fixed(first) => {
            if first != a && first != b {
                return Err(Error::BadParameter(format!("fixed order names `{first}`, not part of the pair")));
            }
            Ok(overridden(first))
        }
        OrderProvider::Completion(llm) => {
            let reply = llm.complete(&order_prompt(a, b))?;
            match parse_order_reply(&reply, pair) {
                Some(first) => Ok(overridden(first)),
                None => heuristic_order(world, a, b),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Phases
// ---------------------------------------------------------------------------

/// Phase one: `batch_size` recorded trajectories under `first` alone.
pub fn run_phase1(
    world: &ConceptWorld,
    schedule: &NoiseSchedule,
    first: &str,
    lambda: f64,
    eta: f64,
    batch_size: usize,
    seed: u64,
) -> Result<PreparatoryList> {
    if batch_size == 0 {
        return Err(Error::BadParameter("batch size must be at least 1".into()));
    }
    let trajectories = sample_batch(world, &[first], lambda, schedule, eta, seed, batch_size, true)?;
    Ok(PreparatoryList {
        schedule: schedule.clone(),
        prompt: vec![first.to_string()],
        lambda,
        eta,
        trajectories,
    })
}

/// Phase two: resume every trajectory at `t = T - n1` and finish under
/// `full_prompt`. Each element keeps its own noise streams, so `n1 = 0` is
/// exactly the baseline run and `n1 = T` returns the phase-one endpoints.
pub fn run_phase2<S: AsRef<str>>(
    world: &ConceptWorld,
    prep: &PreparatoryList,
    n1: usize,
    full_prompt: &[S],
    lambda: f64,
) -> Result<Vec<DVector<f64>>> {
    let schedule = &prep.schedule;
    let steps = schedule.steps();
    if n1 > steps {
        return Err(Error::BadSwitchIndex { n1, steps });
    }
    let switch_t = steps - n1;
    let path = ConditionedPath::new(world, full_prompt, lambda, schedule)?;
    prep.trajectories
        .par_iter()
        .map(|traj| {
            let start = traj
                .state_at(switch_t)
                .ok_or_else(|| Error::BadParameter(format!("trajectory has no recorded state at t = {switch_t}")))?;
            Ok(path.run(schedule, start.clone(), switch_t, 0, prep.eta, traj.seed, None))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoceSettings {
    /// Acceptance band on the control disparity, in posterior units.
    pub tau: f64,
    pub max_iters: usize,
    pub batch: usize,
}

impl Default for MoceSettings {
    fn default() -> Self {
        Self {
            tau: 0.10,
            max_iters: 3,
            batch: 64,
        }
    }
}

impl MoceSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::BadParameter(format!("tau {} must be positive", self.tau)));
        }
        if self.max_iters == 0 {
            return Err(Error::BadParameter("max_iters must be at least 1".into()));
        }
        if self.batch == 0 {
            return Err(Error::BadParameter("batch must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchStep {
    pub n1: usize,
    /// Control disparity: mean score of the second concept minus mean score
    /// of the first.
    pub d_first: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub trace: Vec<SearchStep>,
    /// Index into `trace` of the returned probe.
    pub chosen: usize,
    pub converged: bool,
}

impl SearchOutcome {
    pub fn n1(&self) -> usize {
        self.trace[self.chosen].n1
    }
}

/// Bisection over `n1` in `[0, steps]`.
///
/// A positive control means the first concept is still being lost, so the
/// bracket moves up; a negative one moves it down. Within `tau` the probe is
/// accepted. Without acceptance the probe with the smallest `|control|` is
/// returned (earliest on ties). A probe that would repeat an earlier `n1`
/// ends the search.
pub fn bisect_switch<F>(steps: usize, tau: f64, max_iters: usize, mut control: F) -> Result<SearchOutcome>
where
    F: FnMut(usize) -> Result<f64>,
{
    if !(tau > 0.0) || max_iters == 0 {
        return Err(Error::BadParameter("bisection needs tau > 0 and max_iters >= 1".into()));
    }
    let (mut lo, mut hi) = (0usize, steps);
    let mut trace: Vec<SearchStep> = Vec::with_capacity(max_iters);
    for _ in 0..max_iters {
        let n1 = (lo + hi) / 2;
        if trace.iter().any(|s| s.n1 == n1) {
            break;
        }
        let d_first = control(n1)?;
        trace.push(SearchStep { n1, d_first });
        if d_first > tau {
            lo = n1;
        } else if d_first < -tau {
            hi = n1;
        } else {
            return Ok(SearchOutcome {
                chosen: trace.len() - 1,
                trace,
                converged: true,
            });
        }
    }
    let chosen = trace
        .iter()
        .enumerate()
        .fold(0, |best, (i, s)| if s.d_first.abs() < trace[best].d_first.abs() { i } else { best });
    Ok(SearchOutcome {
        trace,
        chosen,
        converged: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoceResult {
    pub pair: (String, String),
    pub order: OrderDecision,
    /// Final batch, generated at the chosen `n1`.
    pub samples: Vec<Vec<f64>>,
    pub n1: usize,
    pub switch_t: usize,
    pub steps: usize,
    pub trace: Vec<SearchStep>,
    pub converged: bool,
    pub phase1_runs: usize,
    pub phase2_runs: usize,
    /// Disparity of the final batch, `pair.0` against `pair.1`.
    pub final_disparity: DisparityReport,
}

impl MoceResult {
    pub fn sample_vectors(&self) -> Vec<DVector<f64>> {
        self.samples.iter().map(|s| DVector::from_vec(s.clone())).collect()
    }
}

/// Everything a search needs besides the world and the pair.
#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub sampler: SamplerSettings,
    pub moce: MoceSettings,
    pub lambda: f64,
}

pub fn moce_search(
    world: &ConceptWorld,
    pair: (&str, &str),
    config: &SearchConfig,
    seed: u64,
    provider: &OrderProvider,
    scorer: &dyn Scorer,
) -> Result<MoceResult> {
    config.moce.validate()?;
    let schedule = config.sampler.schedule()?;
    let order = decide_order(pair, world, provider)?;
    let first = world.concept(&order.first)?;
    let other = world.concept(&order.second)?;
    let scoring = Scoring { world, scorer };
    let full_prompt = [pair.0, pair.1];

    let prep = run_phase1(
        world,
        &schedule,
        &order.first,
        config.lambda,
        config.sampler.eta,
        config.moce.batch,
        seed,
    )?;
    let phase1_runs = 1;

    let mut batches: Vec<Vec<DVector<f64>>> = Vec::new();
    let outcome = bisect_switch(schedule.steps(), config.moce.tau, config.moce.max_iters, |n1| {
        let samples = run_phase2(world, &prep, n1, &full_prompt, config.lambda)?;
        let d = scoring.batch_disparity(&samples, other, first)?.mean_d;
        batches.push(samples);
        Ok(d)
    })?;
    let phase2_runs = batches.len();
    let samples = batches.swap_remove(outcome.chosen);
    let final_disparity = scoring.batch_disparity(&samples, world.concept(pair.0)?, world.concept(pair.1)?)?;
    let n1 = outcome.n1();

    Ok(MoceResult {
        pair: (pair.0.to_string(), pair.1.to_string()),
        order,
        samples: samples.iter().map(|x| x.iter().copied().collect()).collect(),
        n1,
        switch_t: schedule.steps() - n1,
        steps: schedule.steps(),
        trace: outcome.trace,
        converged: outcome.converged,
        phase1_runs,
        phase2_runs,
        final_disparity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{make_schedule, sample_batch, ScheduleKind};
    use crate::llm::ScriptedCompletion;
    use crate::presets::{coke_world, COKE, TEA_CUP};
    use crate::world::{build_world, ComponentConfig, ConceptConfig, WorldConfig};

    #[test]
    fn container_goes_first() {
        let w = coke_world();
        let d = decide_order((COKE, TEA_CUP), &w, &OrderProvider::Heuristic).unwrap();
        assert_eq!(d.first, TEA_CUP);
        assert_eq!(d.second, COKE);
        assert_eq!(d.rationale, OrderRationale::ContainerFirst);
    }

    #[test]
    fn background_goes_first() {
        let w = build_world(&WorldConfig {
            dim: 2,
            lambda_default: 2.0,
            components: vec![
                ComponentConfig::isotropic(0.7, &[-3.0, 0.0], 0.25, &["W", "G"]),
                ComponentConfig::isotropic(0.3, &[3.0, 0.0], 0.25, &["L"]),
            ],
            concepts: vec![
                ConceptConfig::new("watermelon", ConceptClass::Content, &["W"]),
                ConceptConfig::new("lemon tree", ConceptClass::Background, &["L"]),
            ],
        })
        .unwrap();
        let d = decide_order(("watermelon", "lemon tree"), &w, &OrderProvider::Heuristic).unwrap();
        assert_eq!(d.first, "lemon tree");
        assert_eq!(d.rationale, OrderRationale::BackgroundFirst);
    }

    #[test]
    fn overlooked_concept_goes_first() {
        let w = build_world(&WorldConfig {
            dim: 2,
            lambda_default: 2.0,
            components: vec![
                ComponentConfig::isotropic(0.7, &[-3.0, 0.0], 0.25, &["X"]),
                ComponentConfig::isotropic(0.2, &[3.0, 0.0], 0.25, &["Z"]),
                ComponentConfig::isotropic(0.1, &[0.0, 3.0], 0.25, &["Y"]),
            ],
            concepts: vec![
                ConceptConfig::new("common", ConceptClass::Content, &["X"]),
                ConceptConfig::new("rare", ConceptClass::Content, &["Y"]),
            ],
        })
        .unwrap();
        let d = decide_order(("common", "rare"), &w, &OrderProvider::Heuristic).unwrap();
        assert_eq!(d.first, "rare");
        assert_eq!(d.rationale, OrderRationale::OverlookedFirst);
    }

    #[test]
    fn overrides_and_errors() {
        let w = coke_world();
        let d = decide_order((COKE, TEA_CUP), &w, &OrderProvider::Fixed(COKE.into())).unwrap();
        assert_eq!((d.first.as_str(), d.rationale), (COKE, OrderRationale::ProviderOverride));
        assert!(decide_order((COKE, TEA_CUP), &w, &OrderProvider::Fixed("x".into())).is_err());
        assert!(matches!(
            decide_order((COKE, "x"), &w, &OrderProvider::Heuristic),
            Err(Error::UnknownConcept(_))
        ));
    }

    #[test]
    fn completion_provider_parses_draw_first() {
        let w = coke_world();
        let reply = "Concept A: Tea cup\n- small white cup\n\nTo draw it:\n1. Draw the tea cup first (Concept A), as it acts as the container.\n2. Then fill it.";
        let llm = Arc::new(ScriptedCompletion::new([reply]));
        let d = decide_order((COKE, TEA_CUP), &w, &OrderProvider::Completion(llm.clone())).unwrap();
        assert_eq!(d.first, TEA_CUP);
        assert_eq!(d.rationale, OrderRationale::ProviderOverride);
        assert!(llm.prompts()[0].contains("\"tea cup\""));

        let vague = Arc::new(ScriptedCompletion::new(["Draw whatever you like first."]));
        let d = decide_order((COKE, TEA_CUP), &w, &OrderProvider::Completion(vague)).unwrap();
        assert_eq!(d.rationale, OrderRationale::ContainerFirst);
    }

    #[test]
    fn bisection_hand_trace() {
        let out = bisect_switch(40, 0.25, 3, |n1| Ok(1.5 - 0.05 * n1 as f64)).unwrap();
        assert_eq!(
            out.trace,
            vec![SearchStep { n1: 20, d_first: 0.5 }, SearchStep { n1: 30, d_first: 0.0 }]
        );
        assert!(out.converged);
        assert_eq!(out.n1(), 30);
    }

    #[test]
    fn bisection_immediate_accept() {
        let out = bisect_switch(40, 0.25, 3, |_| Ok(0.1)).unwrap();
        assert_eq!(out.trace.len(), 1);
        assert!(out.converged);
        assert_eq!(out.n1(), 20);
    }

    #[test]
    fn bisection_exhaustion_returns_best() {
        let out = bisect_switch(40, 0.25, 3, |_| Ok(2.0)).unwrap();
        assert!(!out.converged);
        assert_eq!(out.trace.len(), 3);
        assert_eq!(out.n1(), 20);

        let out = bisect_switch(40, 0.25, 3, |n1| Ok(3.0 - 0.05 * n1 as f64)).unwrap();
        assert!(!out.converged);
        assert_eq!(out.trace.iter().map(|s| s.n1).collect::<Vec<_>>(), vec![20, 30, 35]);
        assert_eq!(out.n1(), 35);
    }

    #[test]
    fn bisection_parameter_errors() {
        assert!(bisect_switch(40, 0.0, 3, |_| Ok(0.0)).is_err());
        assert!(bisect_switch(40, 0.1, 0, |_| Ok(0.0)).is_err());
    }

    fn short_schedule() -> NoiseSchedule {
        make_schedule(ScheduleKind::LinearAlphaBar, 40, 1e-4).unwrap()
    }

    #[test]
    fn phase1_shape_and_determinism() {
        let w = coke_world();
        let s = make_schedule(ScheduleKind::LinearAlphaBar, 200, 1e-4).unwrap();
        let p = run_phase1(&w, &s, TEA_CUP, 2.0, 1.0, 4, 9).unwrap();
        assert_eq!(p.len(), 4);
        assert!(p.trajectories.iter().all(|t| t.states.len() == 201));
        let q = run_phase1(&w, &s, TEA_CUP, 2.0, 1.0, 4, 9).unwrap();
        assert_eq!(p.trajectories, q.trajectories);
        assert!(run_phase1(&w, &s, TEA_CUP, 2.0, 1.0, 0, 9).is_err());
    }

    #[test]
    fn phase2_endpoints() {
        let w = coke_world();
        let s = short_schedule();
        for eta in [0.0, 1.0] {
            let prep = run_phase1(&w, &s, TEA_CUP, 2.0, eta, 6, 3).unwrap();
            let none = run_phase2(&w, &prep, 0, &[COKE, TEA_CUP], 2.0).unwrap();
            let baseline = sample_batch(&w, &[COKE, TEA_CUP], 2.0, &s, eta, 3, 6, false).unwrap();
            for (x, b) in none.iter().zip(&baseline) {
                assert_eq!(x, b.endpoint());
            }
            let all = run_phase2(&w, &prep, 40, &[COKE, TEA_CUP], 2.0).unwrap();
            for (x, t) in all.iter().zip(&prep.trajectories) {
                assert_eq!(x, t.endpoint());
            }
        }
    }

    #[test]
    fn phase2_rejects_bad_switch() {
        let w = coke_world();
        let prep = run_phase1(&w, &short_schedule(), TEA_CUP, 2.0, 1.0, 2, 3).unwrap();
        assert!(matches!(
            run_phase2(&w, &prep, 41, &[COKE, TEA_CUP], 2.0),
            Err(Error::BadSwitchIndex { n1: 41, steps: 40 })
        ));
    }

    #[test]
    fn search_is_deterministic_and_budgeted() {
        let w = coke_world();
        let cfg = SearchConfig {
            sampler: SamplerSettings {
                steps: 40,
                ..Default::default()
            },
            moce: MoceSettings {
                batch: 16,
                ..Default::default()
            },
            lambda: 2.0,
        };
        let a = moce_search(&w, (COKE, TEA_CUP), &cfg, 5, &OrderProvider::Heuristic, &crate::scoring::AnalyticScorer).unwrap();
        let b = moce_search(&w, (COKE, TEA_CUP), &cfg, 5, &OrderProvider::Heuristic, &crate::scoring::AnalyticScorer).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.phase1_runs, 1);
        assert_eq!(a.phase2_runs, a.trace.len());
        assert!(a.phase2_runs <= 3);
        assert_eq!(a.switch_t, 40 - a.n1);
        assert_eq!(a.samples.len(), 16);
        if a.converged {
            assert!(a.trace.last().unwrap().d_first.abs() <= 0.10);
        }
    }
}
