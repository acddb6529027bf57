use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use mslbm_cli::commands::{run, Command, Overrides};
use mslbm_cli::config::RunConfig;
use mslbm_cli::{configure_threads, CliResult};
use mslbm_core::fit::FitMode;

#[derive(Parser)]
#[command(name = "mslbm", version, about = "Multi-view sparse low-rank block model")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic multi-view instance with its ground truth
    Simulate(Args),
    /// Estimate the consensus graph, clusters and group weights
    Fit(Args),
    /// Compare all methods over a grid of simulated instances
    Benchmark(Args),
    /// Choose the number of clusters for an embedding
    SelectK(Args),
    /// Build a shifted positive PMI matrix from co-occurrence counts
    Sppmi(Args),
    /// Score a consensus estimate against annotated vertex pairs
    Eval(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Inexact,
}

fn execute(cli: Cli) -> CliResult<()> {
    configure_threads()?;
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Fit(a) => (Command::Fit, a),
        Cmd::Benchmark(a) => (Command::Benchmark, a),
        Cmd::SelectK(a) => (Command::SelectK, a),
        Cmd::Sppmi(a) => (Command::Sppmi, a),
        Cmd::Eval(a) => (Command::Eval, a),
    };
    let cfg = RunConfig::load(&args.config)?;
    let overrides = Overrides {
        out: args.out,
        seed: args.seed,
        mode: args.mode.map(|m| match m {
            Mode::Exact => FitMode::Exact,
            Mode::Inexact => FitMode::Inexact,
        }),
    };
    run(command, &cfg, &overrides)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
