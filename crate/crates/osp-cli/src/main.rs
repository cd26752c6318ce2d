//! Experiment CLI: reproduces the discovery-time, coverage, overhead, and
//! partial-deployment measurements as CSV tables.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use osp::scenario::{self, BuiltScenario, ExperimentKind, Scenario};

#[derive(Parser)]
#[command(
    name = "osp",
    about = "Off-path signaling protocol simulator and experiment runner",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Gossip discovery convergence: per-node cycle counts and T_GD
    Discover(RunArgs),
    /// Signaling distribution over sampled (src, dst) pairs grouped by path
    /// length, one table row per (L, r)
    Distribute(RunArgs),
    /// Analytic gossip bandwidth after convergence (nominal and codec sizes)
    Overhead(RunArgs),
    /// Partial deployment: analytic overhead vs fraction of OSP nodes
    Partial(RunArgs),
    /// Discovery time vs PTS size
    Sweep(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML); its topology path resolves relative to it
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Topology file (.gml or edge list); used when no scenario is given,
    /// with defaults for everything else
    #[arg(long)]
    topology: Option<PathBuf>,
    /// Base RNG seed; repetition i runs with seed + i
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for CSV tables
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Override the gossip PTS size
    #[arg(long)]
    pts: Option<usize>,
    /// Restrict distribution to a single off-path radius
    #[arg(long)]
    r: Option<u32>,
    /// SF payload bytes carried by each probe (default 1024)
    #[arg(long)]
    payload: Option<usize>,
    /// Override the number of repetitions
    #[arg(long)]
    reps: Option<usize>,
    /// Message loss probability (default from scenario, 0.0)
    #[arg(long)]
    loss: Option<f64>,
    /// Maximum sampled pairs per path-length group (default 30)
    #[arg(long)]
    pairs: Option<usize>,
    /// Append the full event trace of every run to this file
    #[arg(long)]
    trace: Option<PathBuf>,
}

fn build(args: &RunArgs, kind: ExperimentKind) -> Result<BuiltScenario> {
    let mut built = match (&args.scenario, &args.topology) {
        (Some(path), _) => scenario::load_scenario(path)
            .with_context(|| format!("loading scenario {}", path.display()))?,
        (None, Some(topo)) => {
            let file = topo
                .file_name()
                .context("topology path has no file name")?
                .to_string_lossy()
                .into_owned();
            let dir = topo.parent().unwrap_or(std::path::Path::new("."));
            let s = Scenario::for_topology(&file);
            scenario::build_scenario(&s, dir)
                .with_context(|| format!("loading topology {}", topo.display()))?
        }
        (None, None) => bail!("one of --scenario or --topology is required"),
    };
    built.experiment.kind = kind;
    if let Some(pts) = args.pts {
        built.gossip.pts_size = pts;
    }
    if let Some(r) = args.r {
        built.experiment.radii = vec![r];
    }
    if let Some(p) = args.payload {
        built.experiment.payload_bytes = p;
    }
    if let Some(reps) = args.reps {
        built.experiment.repetitions = reps;
        built.experiment.seeds.clear();
    }
    if let Some(loss) = args.loss {
        if !(0.0..=1.0).contains(&loss) {
            bail!("--loss must be within [0, 1]");
        }
        built.sim.loss_probability = loss;
    }
    if let Some(pairs) = args.pairs {
        built.experiment.pairs_per_group = pairs;
    }
    built.trace_path = args.trace.clone();
    Ok(built)
}

fn run(args: &RunArgs, kind: ExperimentKind) -> Result<()> {
    let built = build(args, kind)?;
    let summary = osp::harness::execute(&built, args.seed, &args.out)?;
    for line in &summary.lines {
        println!("{line}");
    }
    for f in &summary.csv_files {
        println!("wrote {f}");
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Discover(a) => run(a, ExperimentKind::Discover),
        Cmd::Distribute(a) => run(a, ExperimentKind::Distribute),
        Cmd::Overhead(a) => run(a, ExperimentKind::Overhead),
        Cmd::Partial(a) => run(a, ExperimentKind::Partial),
        Cmd::Sweep(a) => run(a, ExperimentKind::Sweep),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
