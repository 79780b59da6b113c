use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use mlci::config::ExperimentConfig;
use mlci::experiment::{RunOutput, Runner};

/// Maximum likelihood constraint inference on gridded continuous dynamics.
#[derive(Parser, Debug)]
#[command(name = "mlci", version)]
struct Cli {
    /// Experiment configuration (TOML). Built-in defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `output` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for cached transition tables.
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build (or load from cache) the tabular MDP and print its statistics.
    BuildMdp,
    /// Generate demonstrations and write them as CSV.
    GenDemos,
    /// Rank constraint hypotheses against the configured demonstrations.
    Infer,
    /// Goal error of MDP plans executed on the continuous system, per grid size and Δt.
    Accuracy,
    /// Rank of the ground-truth constraint as demonstrations accumulate.
    Ranking,
    /// Distance between predicted and demonstrated violation frequencies.
    Distance,
    /// Telescoping pendulum inference with a top-2 check against the ground truth.
    Tip,
    /// Posterior of the top hypothesis as demonstrations accumulate.
    Confidence,
    /// A demonstration next to a trajectory sampled from the MDP.
    Compare {
        /// Demonstration id.
        #[arg(long, default_value_t = 0)]
        demo: usize,
        /// Seed for the MDP sample (defaults to the experiment seed).
        #[arg(long)]
        sample_seed: Option<u64>,
    },
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    let out_dir = cfg.output.clone();
    let runner = Runner::new(cfg, cli.cache.clone())?;

    let output: RunOutput = match cli.command {
        Command::BuildMdp => runner.build_mdp()?,
        Command::GenDemos => runner.gen_demos()?,
        Command::Infer => runner.inference()?.output,
        Command::Accuracy => runner.accuracy()?,
        Command::Ranking => runner.ranking()?,
        Command::Distance => runner.distance()?,
        Command::Tip => runner.tip()?.output,
        Command::Confidence => runner.confidence()?,
        Command::Compare { demo, sample_seed } => {
            let seed = sample_seed.unwrap_or(runner.cfg.seed);
            runner.compare(demo, seed)?
        }
    };
    if output.files.is_empty() {
        bail!("experiment produced no output");
    }
    for path in output.write_to(&out_dir)? {
        log::info!("wrote {}", path.display());
    }
    print!("{}", output.summary);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
