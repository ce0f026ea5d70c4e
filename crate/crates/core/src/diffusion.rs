//! Variance-preserving diffusion over concept worlds with exact scores.
//!
//! The forward process is `x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps`, so
//! the noised marginal of a Gaussian mixture is again a Gaussian mixture with
//! means `sqrt(abar_t) mu_k` and covariances `abar_t Sigma_k + (1 - abar_t) I`.
//! The reverse sampler is the eta family: `eta = 0` is the deterministic
//! implicit sampler, `eta = 1` the ancestral one.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture::{Gaussian, Mixture};
use crate::rng::{self, tag};
use crate::world::{tilted_conditional, ConceptWorld};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    LinearAlphaBar,
    Cosine,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NoiseSchedule {
    kind: ScheduleKind,
    alpha_bar: Vec<f64>,
}

const COSINE_OFFSET: f64 = 0.008;

pub fn make_schedule(kind: ScheduleKind, steps: usize, alpha_bar_min: f64) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(Error::BadParameter(format!("need at least 2 steps, got {steps}")));
    }
    if !(alpha_bar_min > 0.0 && alpha_bar_min < 1.0) {
        return Err(Error::BadParameter(format!("alpha_bar_min {alpha_bar_min} not in (0, 1)")));
    }
    let n = steps as f64;
    let alpha_bar: Vec<f64> = match kind {
        ScheduleKind::LinearAlphaBar => (0..=steps)
            .map(|t| 1.0 - (1.0 - alpha_bar_min) * t as f64 / n)
            .collect(),
        ScheduleKind::Cosine => {
            let f = |t: f64| {
                let angle = (t / n + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2;
                angle.cos().powi(2)
            };
            let (f0, f_end) = (f(0.0), f(n));
            (0..=steps)
                .map(|t| alpha_bar_min + (1.0 - alpha_bar_min) * (f(t as f64) - f_end) / (f0 - f_end))
                .collect()
        }
    };
    let mut schedule = NoiseSchedule { kind, alpha_bar };
    schedule.alpha_bar[0] = 1.0;
    schedule.alpha_bar[steps] = alpha_bar_min;
    Ok(schedule)
}

impl NoiseSchedule {
    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    /// Number of denoising steps `T`.
    pub fn steps(&self) -> usize {
        self.alpha_bar.len() - 1
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }
}

/// Sampler knobs shared by every command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub steps: usize,
    pub eta: f64,
    pub schedule: ScheduleKind,
    pub alpha_bar_min: f64,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        Self {
            steps: 200,
            eta: 1.0,
            schedule: ScheduleKind::LinearAlphaBar,
            alpha_bar_min: 1e-4,
        }
    }
}

impl SamplerSettings {
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::BadParameter(format!("eta {} not in [0, 1]", self.eta)));
        }
        make_schedule(self.schedule, self.steps, self.alpha_bar_min)
    }
}

// ---------------------------------------------------------------------------
// Marginals, densities, scores
// ---------------------------------------------------------------------------

/// The mixture of `x_t` when `x_0` follows `mixture`.
pub fn noised_mixture(mixture: &Mixture, alpha_bar: f64) -> Mixture {
    let d = mixture.dim;
    let root = alpha_bar.sqrt();
    let identity = DMatrix::<f64>::identity(d, d);
    let components = mixture
        .components
        .iter()
        .map(|c| {
            let mean = &c.mean * root;
            let cov = &c.covariance * alpha_bar + &identity * (1.0 - alpha_bar);
            Gaussian::new(c.weight, mean, cov).expect("SPD plus nonnegative diagonal stays SPD")
        })
        .collect();
    Mixture { dim: d, components }
}

pub fn marginal_params(world: &ConceptWorld, schedule: &NoiseSchedule, t: usize) -> Mixture {
    let mixture = world.mixture();
    if t == 0 {
        return mixture;
    }
    noised_mixture(&mixture, schedule.alpha_bar(t))
}

pub fn log_density(mixture: &Mixture, x: &DVector<f64>) -> f64 {
    mixture.log_density(x)
}

pub fn score(mixture: &Mixture, x: &DVector<f64>) -> DVector<f64> {
    mixture.score(x)
}

/// One reverse step from `x_t` to `x_{t-1}`.
///
/// `score_fn` must return the score of the time-`t` marginal. With
/// `eta = 0` no randomness is drawn.
pub fn denoise_step<F, R>(
    x_t: &DVector<f64>,
    t: usize,
    schedule: &NoiseSchedule,
    score_fn: F,
    eta: f64,
    rng: &mut R,
) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
    R: Rng + ?Sized,
{
    assert!(t >= 1 && t <= schedule.steps(), "step {t} outside 1..={}", schedule.steps());
    let a = schedule.alpha_bar(t);
    let a_prev = schedule.alpha_bar(t - 1);
    let eps = score_fn(x_t) * -(1.0 - a).sqrt();
    let x0 = (x_t - &eps * (1.0 - a).sqrt()) / a.sqrt();
    let sigma = eta * ((1.0 - a_prev) / (1.0 - a)).sqrt() * (1.0 - a / a_prev).sqrt();
    let dir = (1.0 - a_prev - sigma * sigma).max(0.0).sqrt();
    let mut next = x0 * a_prev.sqrt() + eps * dir;
    if sigma > 0.0 {
        next += rng::standard_normal_vector(rng, x_t.len()) * sigma;
    }
    next
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// Per-element seed; step `t` draws its noise from stream `(seed, [t])`.
    pub seed: u64,
    pub prompt: Vec<String>,
    /// `(t, x_t)` in strictly decreasing `t`, starting at `T`. Without
    /// recording only the first and last state are kept.
    pub states: Vec<(usize, DVector<f64>)>,
}

impl Trajectory {
    pub fn endpoint(&self) -> &DVector<f64> {
        &self.states.last().expect("trajectory has at least one state").1
    }

    /// Recorded state at time `t`, if any.
    pub fn state_at(&self, t: usize) -> Option<&DVector<f64>> {
        self.states.iter().find(|(s, _)| *s == t).map(|(_, x)| x)
    }
}

/// Per-step latents of a single-concept run, the starting points of the
/// second phase.
#[derive(Clone, Debug)]
pub struct PreparatoryList {
    pub schedule: NoiseSchedule,
    pub prompt: Vec<String>,
    pub lambda: f64,
    pub eta: f64,
    pub trajectories: Vec<Trajectory>,
}

impl PreparatoryList {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

/// A prompt-conditioned world with its noised marginal at every `t`.
pub struct ConditionedPath {
    marginals: Vec<Mixture>,
}

impl ConditionedPath {
    pub fn new<S: AsRef<str>>(
        world: &ConceptWorld,
        prompt: &[S],
        lambda: f64,
        schedule: &NoiseSchedule,
    ) -> Result<Self> {
        let tilted = tilted_conditional(world, prompt, lambda)?;
        let base = tilted.mixture();
        let marginals = (0..=schedule.steps())
            .map(|t| if t == 0 { base.clone() } else { noised_mixture(&base, schedule.alpha_bar(t)) })
            .collect();
        Ok(Self { marginals })
    }

    pub fn marginal(&self, t: usize) -> &Mixture {
        &self.marginals[t]
    }

    /// Runs steps `from, from - 1, ..., to + 1`, ending at `x_to`.
    pub fn run(
        &self,
        schedule: &NoiseSchedule,
        mut x: DVector<f64>,
        from: usize,
        to: usize,
        eta: f64,
        seed: u64,
        mut record: Option<&mut Vec<(usize, DVector<f64>)>>,
    ) -> DVector<f64> {
        for t in (to + 1..=from).rev() {
            let mixture = &self.marginals[t];
            let mut rng = rng::stream(seed, &[t as u64]);
            x = denoise_step(&x, t, schedule, |y| mixture.score(y), eta, &mut rng);
            if let Some(states) = record.as_deref_mut() {
                states.push((t - 1, x.clone()));
            }
        }
        x
    }
}

pub fn initial_latent(seed: u64, dim: usize) -> DVector<f64> {
    rng::standard_normal_vector(&mut rng::stream(seed, &[tag::INIT]), dim)
}

fn trajectory_on_path(
    path: &ConditionedPath,
    dim: usize,
    prompt: &[String],
    schedule: &NoiseSchedule,
    eta: f64,
    seed: u64,
    record: bool,
) -> Trajectory {
    let steps = schedule.steps();
    let x_init = initial_latent(seed, dim);
    let mut states = vec![(steps, x_init.clone())];
    if record {
        states.reserve(steps);
        path.run(schedule, x_init, steps, 0, eta, seed, Some(&mut states));
    } else {
        let end = path.run(schedule, x_init, steps, 0, eta, seed, None);
        states.push((0, end));
    }
    Trajectory {
        seed,
        prompt: prompt.to_vec(),
        states,
    }
}

/// Samples one trajectory from `x_T ~ N(0, I)` under the tilted conditional
/// for `prompt`. Deterministic in `seed`.
pub fn sample_trajectory<S: AsRef<str>>(
    world: &ConceptWorld,
    prompt: &[S],
    lambda: f64,
    schedule: &NoiseSchedule,
    eta: f64,
    seed: u64,
    record: bool,
) -> Result<Trajectory> {
    let path = ConditionedPath::new(world, prompt, lambda, schedule)?;
    let prompt: Vec<String> = prompt.iter().map(|p| p.as_ref().to_string()).collect();
    Ok(trajectory_on_path(&path, world.dim(), &prompt, schedule, eta, seed, record))
}

/// Seed of batch element `index` under `root`.
pub fn element_seed(root: u64, index: usize) -> u64 {
    rng::derive_seed(root, &[index as u64])
}

/// `count` independent trajectories, element `i` seeded by
/// [`element_seed`]`(root, i)`. Runs data-parallel.
pub fn sample_batch<S: AsRef<str> + Sync>(
    world: &ConceptWorld,
    prompt: &[S],
    lambda: f64,
    schedule: &NoiseSchedule,
    eta: f64,
    root: u64,
    count: usize,
    record: bool,
) -> Result<Vec<Trajectory>> {
    let path = ConditionedPath::new(world, prompt, lambda, schedule)?;
    let prompt: Vec<String> = prompt.iter().map(|p| p.as_ref().to_string()).collect();
    Ok((0..count)
        .into_par_iter()
        .map(|i| trajectory_on_path(&path, world.dim(), &prompt, schedule, eta, element_seed(root, i), record))
        .collect())
}

/// CSV dump: `element,t,x0,x1,...`, one row per recorded state.
pub fn write_trajectories_csv<W: Write>(out: &mut W, trajectories: &[Trajectory]) -> std::io::Result<()> {
    let dim = trajectories
        .first()
        .and_then(|t| t.states.first())
        .map_or(0, |(_, x)| x.len());
    write!(out, "element,t")?;
    for j in 0..dim {
        write!(out, ",x{j}")?;
    }
    writeln!(out)?;
    for (i, traj) in trajectories.iter().enumerate() {
        for (t, x) in &traj.states {
            write!(out, "{i},{t}")?;
            for v in x.iter() {
                write!(out, ",{v:?}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}
