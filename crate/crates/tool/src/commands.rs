use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;

use lcmis_core::config::{GeneratorKind, LabConfig, MAIN_WORLD};
use lcmis_core::diffusion::{sample_batch, write_trajectories_csv};
use lcmis_core::harness::{
    default_suite, render_report, render_sweep, run_benchmark, sweep_switch, BenchmarkReport, ReportFormat,
    SweepSettings,
};
use lcmis_core::manifest::RunManifest;
use lcmis_core::miner::{
    discover_patterns, generate_pairs, merge_patterns, verify_pair_with_search, Binding, ConceptPair, Generator,
    MockGenerator, Pattern, Provenance, VerifyMode,
};
use lcmis_core::moce::{moce_search, OrderProvider};
use lcmis_core::rng::derive_seed;
use lcmis_core::scoring::{batch_disparity, Scorer, ScorerRegistry};
use lcmis_core::store::{RecordBody, Store, SystemClock};
use lcmis_core::world::{build_world, component_histogram, is_correct, tilted_conditional, ConceptWorld};
use lcmis_core::Error;

use crate::{Cli, Command, FormatArg, MineCommand, ModeArg, SuiteArg, WorldCommand};

const STORE_FILE: &str = "store.jsonl";
const TRANSCRIPT_FILE: &str = "transcripts.jsonl";

/// Per-invocation state: effective config, run directory and the manifest
/// being filled in.
struct Run {
    config: LabConfig,
    seed: u64,
    out: PathBuf,
    manifest: RunManifest,
    outputs: Vec<PathBuf>,
}

impl Run {
    fn start(cli: &Cli, command_line: &[String], subcommand: &str) -> Result<Self> {
        let g = &cli.global;
        let mut config = match &g.config {
            Some(path) => LabConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => LabConfig::default(),
        };
        if let Some(v) = g.tau {
            config.moce.tau = v;
        }
        if let Some(v) = g.lambda {
            config.lambda = v;
        }
        if let Some(v) = g.max_iters {
            config.moce.max_iters = v;
        }
        if let Some(v) = g.batch {
            config.moce.batch = v;
        }
        if let Some(v) = g.eta {
            config.sampler.eta = v;
        }
        if let Some(v) = g.steps {
            config.sampler.steps = v;
        }
        config.moce.validate()?;
        config.sampler.schedule()?;
        let manifest = RunManifest::new(
            subcommand,
            command_line.to_vec(),
            g.seed,
            config.digest(),
            &SystemClock,
        );
        // The manifest goes down before any result file.
        manifest.write(&g.out)?;
        Ok(Self {
            config,
            seed: g.seed,
            out: g.out.clone(),
            manifest,
            outputs: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write_text(name, &text)
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(path);
        Ok(())
    }

    fn touch(&mut self, name: &str) {
        let path = self.path(name);
        if !self.outputs.contains(&path) {
            self.outputs.push(path);
        }
    }

    fn finish(mut self) -> Result<()> {
        let outputs = std::mem::take(&mut self.outputs);
        self.manifest.finish(outputs, &SystemClock);
        self.manifest.write(&self.out)?;
        Ok(())
    }

    fn world(&self) -> Result<ConceptWorld> {
        Ok(build_world(&self.config.world)?)
    }

    fn scorer(&self) -> Result<Arc<dyn Scorer>> {
        Ok(ScorerRegistry::default().get(&self.config.scorer)?)
    }

    fn order(&self, first: Option<&String>) -> OrderProvider {
        match first.or(self.config.first.as_ref()) {
            Some(name) => OrderProvider::Fixed(name.clone()),
            None => OrderProvider::Heuristic,
        }
    }

    fn store(&self) -> Result<Store> {
        Ok(Store::open(self.path(STORE_FILE))?)
    }

    fn generator(&self, store_len: usize) -> Result<Box<dyn Generator>> {
        let mining = &self.config.mining;
        match mining.generator.kind {
            GeneratorKind::Mock => Ok(Box::new(MockGenerator::new(
                mining.vocabulary.clone(),
                derive_seed(self.seed, &[store_len as u64]),
            ))),
            GeneratorKind::Http => http_generator(&mining.generator),
        }
    }
}

#[cfg(feature = "http")]
fn http_generator(cfg: &lcmis_core::config::GeneratorConfig) -> Result<Box<dyn Generator>> {
    use lcmis_core::llm::HttpCompletion;
    use lcmis_core::miner::LlmGenerator;
    let completion = HttpCompletion::from_env(&cfg.endpoint, &cfg.model, &cfg.api_key_env)?;
    Ok(Box::new(LlmGenerator::new(completion)))
}

#[cfg(not(feature = "http"))]
fn http_generator(_: &lcmis_core::config::GeneratorConfig) -> Result<Box<dyn Generator>> {
    Err(Error::GeneratorUnavailable("built without the `http` feature".into()).into())
}

pub fn execute(cli: &Cli, command_line: Vec<String>) -> Result<()> {
    let argv = command_line.as_slice();
    match &cli.command {
        Command::World(WorldCommand::Validate { world }) => world_validate(cli, world.as_deref()),
        Command::Sample(args) => {
            let mut run = Run::start(cli, argv, "sample")?;
            sample(&mut run, &args.prompt, args.count, args.dump_trajectories)?;
            run.finish()
        }
        Command::Baseline(args) => {
            let mut run = Run::start(cli, argv, "baseline")?;
            baseline(&mut run, (&args.pair.0, &args.pair.1), args.count)?;
            run.finish()
        }
        Command::Moce(args) => {
            let mut run = Run::start(cli, argv, "moce")?;
            moce(&mut run, (&args.pair.0, &args.pair.1), args.first.as_ref())?;
            run.finish()
        }
        Command::Mine(cmd) => {
            let name = match cmd {
                MineCommand::Phase2 { .. } => "mine phase2",
                MineCommand::Phase3 { .. } => "mine phase3",
                MineCommand::Phase4 { .. } => "mine phase4",
            };
            let mut run = Run::start(cli, argv, name)?;
            match cmd {
                MineCommand::Phase2 { n, pattern } => mine_phase2(&mut run, *n, pattern.as_deref())?,
                MineCommand::Phase3 { n } => mine_phase3(&mut run, *n)?,
                MineCommand::Phase4 { left, right } => mine_phase4(&mut run, left.as_deref(), right.as_deref())?,
            }
            run.finish()
        }
        Command::Verify(args) => {
            let mut run = Run::start(cli, argv, "verify")?;
            verify(&mut run, args.mode)?;
            run.finish()
        }
        Command::Bench(args) => {
            let mut run = Run::start(cli, argv, "bench")?;
            bench(&mut run, args.suite)?;
            run.finish()
        }
        Command::Sweep(args) => {
            let mut run = Run::start(cli, argv, "sweep")?;
            sweep(&mut run, (&args.pair.0, &args.pair.1), args.grid.clone(), args.samples)?;
            run.finish()
        }
        Command::Report(args) => report(cli, args.input.as_deref(), args.format),
    }
}

// ---------------------------------------------------------------------------
// World and sampling
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct ConceptSummary {
    name: String,
    tilted_weights: Vec<f64>,
}

#[derive(Serialize)]
struct WorldSummary {
    name: String,
    dim: usize,
    weights: Vec<f64>,
    tags: Vec<Vec<String>>,
    concepts: Vec<ConceptSummary>,
}

fn world_validate(cli: &Cli, name: Option<&str>) -> Result<()> {
    let config = match &cli.global.config {
        Some(path) => LabConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => LabConfig::default(),
    };
    let lambda = cli.global.lambda.unwrap_or(config.lambda);
    let name = name.unwrap_or(MAIN_WORLD);
    let world_cfg = if name == MAIN_WORLD {
        &config.world
    } else {
        config.worlds.get(name).ok_or_else(|| anyhow!("no world named `{name}` in the config"))?
    };
    let world = build_world(world_cfg)?;
    let concepts = world
        .concepts()
        .iter()
        .map(|c| {
            Ok(ConceptSummary {
                name: c.name().to_string(),
                tilted_weights: tilted_conditional(&world, &[c.name()], lambda)?.weights(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = WorldSummary {
        name: name.to_string(),
        dim: world.dim(),
        weights: world.weights(),
        tags: world.components().iter().map(|c| c.tags.iter().cloned().collect()).collect(),
        concepts,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

#[derive(Serialize)]
struct SampleOutput<'a> {
    prompt: &'a [String],
    lambda: f64,
    seed: u64,
    tilted_weights: Vec<f64>,
    component_counts: Vec<usize>,
    endpoints: Vec<Vec<f64>>,
}

fn sample(run: &mut Run, prompt: &[String], count: usize, dump: bool) -> Result<()> {
    if count == 0 {
        bail!(Error::BadParameter("count must be at least 1".into()));
    }
    let world = run.world()?;
    let schedule = run.config.sampler.schedule()?;
    let lambda = run.config.lambda;
    let batch = sample_batch(&world, prompt, lambda, &schedule, run.config.sampler.eta, run.seed, count, dump)?;
    let out = SampleOutput {
        prompt,
        lambda,
        seed: run.seed,
        tilted_weights: tilted_conditional(&world, prompt, lambda)?.weights(),
        component_counts: component_histogram(&world, batch.iter().map(|t| t.endpoint())),
        endpoints: batch.iter().map(|t| t.endpoint().iter().copied().collect()).collect(),
    };
    run.write_json("samples.json", &out)?;
    if dump {
        let mut csv = Vec::new();
        write_trajectories_csv(&mut csv, &batch)?;
        run.write_text("trajectories.csv", &String::from_utf8(csv)?)?;
    }
    println!("{} samples, component counts {:?}", count, out.component_counts);
    Ok(())
}

#[derive(Serialize)]
struct BaselineOutput {
    pair: (String, String),
    count: usize,
    correct: usize,
    correct_rate: f64,
    tilted_weights: Vec<f64>,
    component_counts: Vec<usize>,
    mean_d: f64,
    abs_mean_d: f64,
    s_a: f64,
    s_b: f64,
}

fn baseline(run: &mut Run, pair: (&str, &str), count: usize) -> Result<()> {
    if count == 0 {
        bail!(Error::BadParameter("count must be at least 1".into()));
    }
    let world = run.world()?;
    let schedule = run.config.sampler.schedule()?;
    let lambda = run.config.lambda;
    let prompt = [pair.0, pair.1];
    let batch = sample_batch(&world, &prompt, lambda, &schedule, run.config.sampler.eta, run.seed, count, false)?;
    let endpoints: Vec<_> = batch.iter().map(|t| t.endpoint().clone()).collect();
    let mut correct = 0;
    for x in &endpoints {
        if is_correct(&world, x, pair)? {
            correct += 1;
        }
    }
    let d = batch_disparity(&world, &endpoints, pair.0, pair.1)?;
    let out = BaselineOutput {
        pair: (pair.0.into(), pair.1.into()),
        count,
        correct,
        correct_rate: correct as f64 / count as f64,
        tilted_weights: tilted_conditional(&world, &prompt, lambda)?.weights(),
        component_counts: component_histogram(&world, &endpoints),
        mean_d: d.mean_d,
        abs_mean_d: d.abs_mean(),
        s_a: d.s_a,
        s_b: d.s_b,
    };
    run.write_json("baseline.json", &out)?;
    println!(
        "correct {}/{} ({:.3}), mean |D| {:.4}",
        correct, count, out.correct_rate, out.abs_mean_d
    );
    Ok(())
}

fn moce(run: &mut Run, pair: (&str, &str), first: Option<&String>) -> Result<()> {
    let world = run.world()?;
    let provider = run.order(first);
    let scorer = run.scorer()?;
    let result = moce_search(&world, pair, &run.config.search_config(), run.seed, &provider, scorer.as_ref())?;
    let samples = result.sample_vectors();
    let mut correct = 0;
    for x in &samples {
        if is_correct(&world, x, pair)? {
            correct += 1;
        }
    }
    run.write_json("moce.json", &result)?;
    println!(
        "first {}, n1 {} of {} ({} phase-2 runs, converged {}), correct {}/{}, mean |D| {:.4}",
        result.order.first,
        result.n1,
        result.steps,
        result.phase2_runs,
        result.converged,
        correct,
        samples.len(),
        result.final_disparity.abs_mean()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// Mining
// ---------------------------------------------------------------------------

/// Stored patterns, seeding the store from the config when it has none.
fn patterns_or_seed(run: &Run, store: &mut Store) -> Result<Vec<Pattern>> {
    let scan = store.scan()?;
    report_corrupt(&scan);
    let mut seen = BTreeSet::new();
    let mut patterns: Vec<Pattern> = scan.patterns().filter(|p| seen.insert(p.name.to_lowercase())).cloned().collect();
    if patterns.is_empty() {
        let mining = &run.config.mining;
        for name in &mining.seed_patterns {
            let p = Pattern::seed(name.clone());
            store.append(RecordBody::Pattern(p.clone()))?;
            patterns.push(p);
        }
        for sp in &mining.seed_pairs {
            let pair = ConceptPair {
                a_name: sp.a.clone(),
                b_name: sp.b.clone(),
                pattern: sp.pattern.clone(),
                binding: sp.world.as_ref().map(|w| Binding {
                    world: w.clone(),
                    a: sp.a.clone(),
                    b: sp.b.clone(),
                }),
                level: None,
                provenance: Provenance::HumanSeed,
            };
            store.append(RecordBody::Pair(pair))?;
        }
    }
    Ok(patterns)
}

fn report_corrupt(scan: &lcmis_core::store::Scan) {
    for c in &scan.corrupt {
        eprintln!("warning: skipping corrupt store line {}: {}", c.line, c.message);
    }
}

fn save_transcript(run: &mut Run, generator: &mut dyn Generator) -> Result<()> {
    let mut transcripts = Store::open(run.path(TRANSCRIPT_FILE))?;
    transcripts.append_all(generator.drain_transcript().into_iter().map(RecordBody::Transcript))?;
    run.touch(TRANSCRIPT_FILE);
    Ok(())
}

fn mine_phase2(run: &mut Run, n: Option<usize>, only: Option<&str>) -> Result<()> {
    let n = n.unwrap_or(run.config.mining.pairs_per_request);
    let mut store = run.store()?;
    let patterns = patterns_or_seed(run, &mut store)?;
    let scan = store.scan()?;
    let mut generator = run.generator(scan.records.len())?;
    let mut total = 0;
    for pattern in patterns.iter().filter(|p| p.lcmis_flag) {
        if only.is_some_and(|o| !o.eq_ignore_ascii_case(&pattern.name)) {
            continue;
        }
        let few_shot: Vec<ConceptPair> = scan.pairs().filter(|p| p.pattern == pattern.name).cloned().collect();
        let generated = match generate_pairs(generator.as_mut(), pattern, &few_shot, n) {
            Ok(pairs) => pairs,
            Err(Error::EmptyReply) => {
                eprintln!("warning: no pairs parsed for \"{}\"", pattern.name);
                Vec::new()
            }
            Err(e) => {
                save_transcript(run, generator.as_mut())?;
                return Err(e.into());
            }
        };
        println!("{}: {} new pairs", pattern.name, generated.len());
        total += generated.len();
        store.append_all(generated.into_iter().map(RecordBody::Pair))?;
    }
    save_transcript(run, generator.as_mut())?;
    run.touch(STORE_FILE);
    println!("{total} pairs added");
    Ok(())
}

fn mine_phase3(run: &mut Run, n: Option<usize>) -> Result<()> {
    let n = n.unwrap_or(run.config.mining.new_patterns);
    let mut store = run.store()?;
    let patterns = patterns_or_seed(run, &mut store)?;
    let len = store.scan()?.records.len();
    let mut generator = run.generator(len)?;
    let found = discover_patterns(generator.as_mut(), &patterns, n);
    save_transcript(run, generator.as_mut())?;
    let found = found?;
    for p in &found {
        println!("{}", p.name);
    }
    store.append_all(found.into_iter().map(RecordBody::Pattern))?;
    run.touch(STORE_FILE);
    Ok(())
}

fn mine_phase4(run: &mut Run, left: Option<&str>, right: Option<&str>) -> Result<()> {
    let mut store = run.store()?;
    let patterns = patterns_or_seed(run, &mut store)?;
    let find = |name: Option<&str>, fallback: usize| -> Result<Pattern> {
        match name {
            Some(n) => patterns
                .iter()
                .find(|p| p.name.eq_ignore_ascii_case(n))
                .cloned()
                .ok_or_else(|| anyhow!("no stored pattern named \"{n}\"")),
            None => patterns
                .get(fallback)
                .cloned()
                .ok_or_else(|| anyhow!("merging needs two stored patterns")),
        }
    };
    let (p1, p2) = (find(left, 0)?, find(right, 1)?);
    let (m1, m2) = merge_patterns(&p1, &p2)?;
    let known: BTreeSet<String> = patterns.iter().map(|p| p.name.to_lowercase()).collect();
    for m in [m1, m2] {
        if known.contains(&m.name.to_lowercase()) {
            println!("{} (already stored)", m.name);
            continue;
        }
        println!("{}", m.name);
        store.append(RecordBody::Pattern(m))?;
    }
    run.touch(STORE_FILE);
    Ok(())
}

fn verify(run: &mut Run, mode: ModeArg) -> Result<()> {
    let mut store = run.store()?;
    let scan = store.scan()?;
    report_corrupt(&scan);
    let pairs: Vec<ConceptPair> = scan.pairs().cloned().collect();
    let catalog = run.config.catalog();
    let settings = run.config.verify_settings();
    let provider = run.order(None);
    let scorer = run.scorer()?;
    let modes: &[VerifyMode] = match mode {
        ModeArg::Baseline => &[VerifyMode::Baseline],
        ModeArg::Moce => &[VerifyMode::Moce],
        ModeArg::Both => &[VerifyMode::Baseline, VerifyMode::Moce],
    };
    for (i, pair) in pairs.iter().enumerate() {
        let seed = derive_seed(run.seed, &[lcmis_core::rng::tag::PAIR, i as u64]);
        for &m in modes {
            let (record, _) = verify_pair_with_search(pair, &catalog, &settings, m, seed, &provider, scorer.as_ref())?;
            println!("{} [{:?}]: {}/20 correct, {}", pair.label(), m, record.correct_count, record.level);
            store.append(RecordBody::Verification(record))?;
        }
    }
    run.touch(STORE_FILE);
    Ok(())
}

fn bench(run: &mut Run, suite: SuiteArg) -> Result<()> {
    let (pairs, catalog) = match suite {
        SuiteArg::Builtin => default_suite(),
        SuiteArg::Store => {
            let scan = run.store()?.scan()?;
            report_corrupt(&scan);
            (scan.pairs().cloned().collect(), run.config.catalog())
        }
    };
    let provider = run.order(None);
    let scorer = run.scorer()?;
    let report = run_benchmark(
        &pairs,
        &catalog,
        &run.config.verify_settings(),
        run.seed,
        &provider,
        scorer.as_ref(),
        &run.manifest.config_digest,
    )?;
    run.write_text("report.json", &render_report(&report, ReportFormat::Json))?;
    let md = render_report(&report, ReportFormat::Markdown);
    run.write_text("report.md", &md)?;
    print!("{md}");
    Ok(())
}

fn sweep(run: &mut Run, pair: (&str, &str), grid: Option<Vec<f64>>, samples: Option<usize>) -> Result<()> {
    let world = run.world()?;
    let grid = grid.unwrap_or_else(|| run.config.sweep.grid.clone());
    let settings = SweepSettings {
        sampler: run.config.sampler.clone(),
        lambda: run.config.lambda,
        samples: samples.unwrap_or(run.config.sweep.samples),
    };
    let scorer = run.scorer()?;
    let points = sweep_switch(&world, pair, &grid, &settings, run.seed, &run.order(None), scorer.as_ref())?;
    run.write_json("sweep.json", &points)?;
    let md = render_sweep(&points);
    run.write_text("sweep.md", &md)?;
    print!("{md}");
    Ok(())
}

fn report(cli: &Cli, input: Option<&Path>, format: FormatArg) -> Result<()> {
    let path = input.map(Path::to_path_buf).unwrap_or_else(|| cli.global.out.join("report.json"));
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let report: BenchmarkReport = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let format = match format {
        FormatArg::Markdown => ReportFormat::Markdown,
        FormatArg::Json => ReportFormat::Json,
    };
    print!("{}", render_report(&report, format));
    Ok(())
}
