//! `lcmis` command line: argument parsing and dispatch.
//!
//! Exit status is 0 on success, 1 when a command fails, and 2 for usage
//! errors.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "lcmis", version, about = "Concept-world diffusion laboratory")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Lab configuration, TOML or JSON. Built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Root seed for every random stream of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Run directory for manifests, stores and reports.
    #[arg(long, global = true, default_value = "lcmis-run")]
    pub out: PathBuf,

    /// Acceptance band on the control disparity.
    #[arg(long, global = true)]
    pub tau: Option<f64>,

    /// Tilt strength of prompt conditioning.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,

    /// Phase-two evaluations allowed per search.
    #[arg(long, global = true)]
    pub max_iters: Option<usize>,

    /// Batch size of the search signal.
    #[arg(long, global = true)]
    pub batch: Option<usize>,

    /// Sampler stochasticity, 0 (deterministic) to 1.
    #[arg(long, global = true)]
    pub eta: Option<f64>,

    /// Number of denoising steps.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// World checks.
    #[command(subcommand)]
    World(WorldCommand),
    /// Draw samples for a prompt.
    Sample(SampleArgs),
    /// Full-prompt sampling of a pair: correct rate and disparity.
    Baseline(BaselineArgs),
    /// Two-phase sampling with the switch-step search.
    Moce(MoceArgs),
    /// Dataset mining steps.
    #[command(subcommand)]
    Mine(MineCommand),
    /// Rate every stored pair.
    Verify(VerifyArgs),
    /// Baseline against two-phase benchmark.
    Bench(BenchArgs),
    /// Correct rate and disparity over fixed switch steps.
    Sweep(SweepArgs),
    /// Re-render a stored benchmark report.
    Report(ReportArgs),
}

#[derive(Debug, Subcommand)]
pub enum WorldCommand {
    /// Build the configured world and print a summary.
    Validate {
        /// Named world from the config; the main world by default.
        #[arg(long)]
        world: Option<String>,
    },
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Comma-separated concept names.
    #[arg(long, value_parser = parse_list)]
    pub prompt: Vec<String>,
    #[arg(long, default_value_t = 16)]
    pub count: usize,
    /// Also write every recorded state to trajectories.csv.
    #[arg(long)]
    pub dump_trajectories: bool,
}

#[derive(Debug, Args)]
pub struct BaselineArgs {
    /// Concept pair as "A,B".
    #[arg(long, value_parser = parse_pair)]
    pub pair: (String, String),
    #[arg(long, default_value_t = 2000)]
    pub count: usize,
}

#[derive(Debug, Args)]
pub struct MoceArgs {
    /// Concept pair as "A,B".
    #[arg(long, value_parser = parse_pair)]
    pub pair: (String, String),
    /// Concept to introduce alone first; overrides the ordering heuristic.
    #[arg(long)]
    pub first: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum MineCommand {
    /// Expand every stored pattern with new pairs.
    Phase2 {
        /// Pairs requested per pattern.
        #[arg(long)]
        n: Option<usize>,
        /// Only expand this pattern.
        #[arg(long)]
        pattern: Option<String>,
    },
    /// Ask for new patterns.
    Phase3 {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Merge two stored patterns into two new ones.
    Phase4 {
        /// First parent; the first stored pattern by default.
        #[arg(long)]
        left: Option<String>,
        /// Second parent; the second stored pattern by default.
        #[arg(long)]
        right: Option<String>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Baseline,
    Moce,
    Both,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value = "both")]
    pub mode: ModeArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SuiteArg {
    /// Pairs from the run directory's store.
    Store,
    /// The twelve built-in biased worlds.
    Builtin,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "store")]
    pub suite: SuiteArg,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Concept pair as "A,B".
    #[arg(long, value_parser = parse_pair)]
    pub pair: (String, String),
    /// Comma-separated phase-one fractions; the config grid by default.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Markdown,
    Json,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON; `<out>/report.json` by default.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "markdown")]
    pub format: FormatArg,
}

fn parse_list(s: &str) -> Result<Vec<String>, String> {
    let items: Vec<String> = s.split(',').map(|p| p.trim().to_string()).filter(|p| !p.is_empty()).collect();
    if items.is_empty() {
        return Err("expected at least one concept name".into());
    }
    Ok(items)
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    match s.split_once(',') {
        Some((a, b)) if !a.trim().is_empty() && !b.trim().is_empty() && !b.contains(',') => {
            Ok((a.trim().to_string(), b.trim().to_string()))
        }
        _ => Err(format!("expected \"A,B\", got \"{s}\"")),
    }
}

fn parse_grid(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|e| format!("grid value \"{v}\": {e}")))
        .collect()
}

/// Parses `argv` (program name first) and runs the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let command_line = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::execute(&cli, command_line) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
