//! Benchmarks, the switch-step sweep, and report rendering.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::{sample_batch, SamplerSettings};
use crate::error::{Error, Result};
use crate::miner::{
    verify_pair_with_search, Binding, ConceptPair, Level, Provenance, VerifyMode, VerifySettings, Vocabulary,
    WorldCatalog,
};
use crate::moce::{decide_order, run_phase1, run_phase2, OrderProvider};
use crate::presets::biased_world_config;
use crate::rng::{derive_seed, tag};
use crate::scoring::{Scorer, Scoring};
use crate::world::{is_correct, ConceptWorld};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub pair: String,
    pub pattern: String,
    pub baseline_level: Level,
    pub moce_level: Level,
    pub baseline_correct: u32,
    pub moce_correct: u32,
    pub baseline_abs_d: f64,
    pub moce_abs_d: f64,
    pub n1: usize,
    pub steps: usize,
    pub phase1_runs: usize,
    pub phase2_runs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct MethodAggregate {
    /// Pair counts for Level 1 through Level 5.
    pub histogram: [usize; 5],
    pub mean_abs_d: f64,
    pub percent_level5: f64,
}

impl MethodAggregate {
    fn from_rows(rows: impl Iterator<Item = (Level, f64)> + Clone) -> Self {
        let mut histogram = [0usize; 5];
        let mut sum = 0.0;
        let mut n = 0usize;
        for (level, d) in rows {
            histogram[level.value() as usize - 1] += 1;
            sum += d;
            n += 1;
        }
        Self {
            histogram,
            mean_abs_d: if n == 0 { 0.0 } else { sum / n as f64 },
            percent_level5: percent(histogram[4], n),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportManifest {
    pub root_seed: u64,
    pub config_digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    pub baseline: MethodAggregate,
    pub moce: MethodAggregate,
    pub manifest: ReportManifest,
}

impl BenchmarkReport {
    pub fn from_rows(rows: Vec<BenchmarkRow>, manifest: ReportManifest) -> Self {
        let baseline = MethodAggregate::from_rows(rows.iter().map(|r| (r.baseline_level, r.baseline_abs_d)));
        let moce = MethodAggregate::from_rows(rows.iter().map(|r| (r.moce_level, r.moce_abs_d)));
        Self {
            rows,
            baseline,
            moce,
            manifest,
        }
    }
}

/// `count / total` as a percentage; 0 for an empty total.
pub fn percent(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

/// Whole-number percentage: the value is first rounded to one decimal and
/// then to an integer, so 272 of 499 (54.51%) shows as "55%".
pub fn display_percent(count: usize, total: usize) -> String {
    let one_decimal = (percent(count, total) * 10.0).round() / 10.0;
    format!("{}%", one_decimal.round() as i64)
}

/// Baseline and two-phase verification for every pair, in parallel. Pair
/// `i` uses seed `derive(seed, [PAIR, i])`. The baseline disparity comes
/// from one batch of `moce.batch` full-prompt samples.
pub fn run_benchmark(
    pairs: &[ConceptPair],
    catalog: &WorldCatalog,
    settings: &VerifySettings,
    seed: u64,
    provider: &OrderProvider,
    scorer: &dyn Scorer,
    config_digest: &str,
) -> Result<BenchmarkReport> {
    settings.moce.validate()?;
    let schedule = settings.sampler.schedule()?;
    for pair in pairs {
        catalog.resolve(pair)?;
    }
    let rows = pairs
        .par_iter()
        .enumerate()
        .map(|(i, pair)| {
            let pair_seed = derive_seed(seed, &[tag::PAIR, i as u64]);
            let bound = catalog.resolve(pair)?;
            let (base, _) =
                verify_pair_with_search(pair, catalog, settings, VerifyMode::Baseline, pair_seed, provider, scorer)?;
            let (moce, search) =
                verify_pair_with_search(pair, catalog, settings, VerifyMode::Moce, pair_seed, provider, scorer)?;
            let search = search.expect("moce mode returns its search");
            let batch = sample_batch(
                &bound.world,
                &[bound.a.as_str(), bound.b.as_str()],
                settings.lambda,
                &schedule,
                settings.sampler.eta,
                derive_seed(pair_seed, &[tag::SEARCH]),
                settings.moce.batch,
                false,
            )?;
            let endpoints: Vec<_> = batch.iter().map(|t| t.endpoint().clone()).collect();
            let scoring = Scoring {
                world: &bound.world,
                scorer,
            };
            let baseline_d = scoring.batch_disparity(
                &endpoints,
                bound.world.concept(&bound.a)?,
                bound.world.concept(&bound.b)?,
            )?;
            Ok(BenchmarkRow {
                pair: pair.label(),
                pattern: pair.pattern.clone(),
                baseline_level: base.level,
                moce_level: moce.level,
                baseline_correct: base.correct_count,
                moce_correct: moce.correct_count,
                baseline_abs_d: baseline_d.abs_mean(),
                moce_abs_d: search.final_disparity.abs_mean(),
                n1: search.n1,
                steps: search.steps,
                phase1_runs: search.phase1_runs,
                phase2_runs: search.phase2_runs,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchmarkReport::from_rows(
        rows,
        ReportManifest {
            root_seed: seed,
            config_digest: config_digest.to_string(),
        },
    ))
}

/// Twelve biased worlds: joint-to-latent weight ratios 4, 8 and 16, each at
/// four rotations of the layout. Returns one bound pair per world.
pub fn default_suite() -> (Vec<ConceptPair>, WorldCatalog) {
    let mut worlds = BTreeMap::new();
    let mut pairs = Vec::new();
    for ratio in [4u32, 8, 16] {
        for turn in 0..4u32 {
            let key = format!("suite-r{ratio}-q{turn}");
            let a = format!("content r{ratio} q{turn}");
            let b = format!("container r{ratio} q{turn}");
            let c = format!("usual vessel r{ratio} q{turn}");
            worlds.insert(
                key.clone(),
                biased_world_config(ratio as f64, turn as f64 * FRAC_PI_2, &a, &b, &c),
            );
            pairs.push(ConceptPair {
                binding: Some(Binding {
                    world: key,
                    a: a.clone(),
                    b: b.clone(),
                }),
                a_name: a,
                b_name: b,
                pattern: "Content and erroneous container".into(),
                level: None,
                provenance: Provenance::HumanSeed,
            });
        }
    }
    (
        pairs,
        WorldCatalog {
            worlds,
            vocabulary: Vocabulary::default(),
        },
    )
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub fraction: f64,
    pub n1: usize,
    pub correct_rate: f64,
    pub mean_abs_d: f64,
}

#[derive(Clone, Debug)]
pub struct SweepSettings {
    pub sampler: SamplerSettings,
    pub lambda: f64,
    pub samples: usize,
}

/// Fixed-switch runs at each grid fraction, `n1 = round(f * T)`, all
/// resuming from one shared phase-one batch.
pub fn sweep_switch(
    world: &ConceptWorld,
    pair: (&str, &str),
    grid: &[f64],
    settings: &SweepSettings,
    seed: u64,
    provider: &OrderProvider,
    scorer: &dyn Scorer,
) -> Result<Vec<SweepPoint>> {
    if let Some(f) = grid.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::BadParameter(format!("grid value {f} not in [0, 1]")));
    }
    if settings.samples == 0 {
        return Err(Error::BadParameter("sweep needs at least one sample".into()));
    }
    let schedule = settings.sampler.schedule()?;
    let order = decide_order(pair, world, provider)?;
    let prep = run_phase1(
        world,
        &schedule,
        &order.first,
        settings.lambda,
        settings.sampler.eta,
        settings.samples,
        seed,
    )?;
    let scoring = Scoring { world, scorer };
    let (ca, cb) = (world.concept(pair.0)?, world.concept(pair.1)?);
    grid.iter()
        .map(|&fraction| {
            let n1 = (fraction * schedule.steps() as f64).round() as usize;
            let samples = run_phase2(world, &prep, n1, &[pair.0, pair.1], settings.lambda)?;
            let mut correct = 0usize;
            for x in &samples {
                if is_correct(world, x, pair)? {
                    correct += 1;
                }
            }
            Ok(SweepPoint {
                fraction,
                n1,
                correct_rate: correct as f64 / samples.len() as f64,
                mean_abs_d: scoring.batch_disparity(&samples, ca, cb)?.abs_mean(),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Markdown,
    Json,
}

pub fn render_report(report: &BenchmarkReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(report).expect("report serializes") + "\n",
        ReportFormat::Markdown => render_markdown(report),
    }
}

fn render_markdown(r: &BenchmarkReport) -> String {
    let n = r.rows.len();
    let mut s = String::new();
    let _ = writeln!(s, "# Benchmark report\n");
    let _ = writeln!(s, "- pairs: {n}");
    let _ = writeln!(s, "- root seed: {}", r.manifest.root_seed);
    let _ = writeln!(s, "- config digest: `{}`\n", r.manifest.config_digest);

    let _ = writeln!(s, "## Level distribution\n");
    let _ = writeln!(s, "| Level | Baseline | MoCE |");
    let _ = writeln!(s, "|---|---:|---:|");
    for level in 1..=5 {
        let i = level - 1;
        let _ = writeln!(s, "| {level} | {} | {} |", r.baseline.histogram[i], r.moce.histogram[i]);
    }
    let _ = writeln!(
        s,
        "| Level 5 share | {} | {} |\n",
        display_percent(r.baseline.histogram[4], n),
        display_percent(r.moce.histogram[4], n)
    );

    let _ = writeln!(s, "## Disparity\n");
    let _ = writeln!(s, "| Method | mean abs D |");
    let _ = writeln!(s, "|---|---:|");
    let _ = writeln!(s, "| Baseline | {:.4} |", r.baseline.mean_abs_d);
    let _ = writeln!(s, "| MoCE | {:.4} |\n", r.moce.mean_abs_d);

    let _ = writeln!(s, "## Pairs\n");
    let _ = writeln!(
        s,
        "| Pair | Pattern | Baseline level | MoCE level | Baseline abs D | MoCE abs D | n1 / T | phase-2 runs |"
    );
    let _ = writeln!(s, "|---|---|---:|---:|---:|---:|---:|---:|");
    for row in &r.rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {:.4} | {:.4} | {} / {} | {} |",
            row.pair,
            row.pattern,
            row.baseline_level.value(),
            row.moce_level.value(),
            row.baseline_abs_d,
            row.moce_abs_d,
            row.n1,
            row.steps,
            row.phase2_runs
        );
    }
    s
}

/// Markdown table of a sweep curve.
pub fn render_sweep(points: &[SweepPoint]) -> String {
    let mut s = String::from("| n1 fraction | n1 | correct rate | mean abs D |\n|---:|---:|---:|---:|\n");
    for p in points {
        let _ = writeln!(s, "| {:.3} | {} | {:.4} | {:.4} |", p.fraction, p.n1, p.correct_rate, p.mean_abs_d);
    }
    s
}
