//! `otsieve`: simulate noisy long-tailed embeddings, extract a clean subset,
//! score it, or solve a single transport problem.
//!
//! Exit status is 0 on success, 2 on a usage error and 1 on any failure
//! while running.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::Tunables;

#[derive(Debug, Parser)]
#[command(name = "otsieve", version, about = "Clean-subset extraction from noisy long-tailed embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic long-tailed mixture with noisy training labels.
    Simulate(SimulateArgs),
    /// Run the extraction loop and write per-epoch reports and the subset.
    Extract(ExtractArgs),
    /// Score a subset file against ground-truth labels.
    Evaluate(EvaluateArgs),
    /// Optimal transport utilities.
    Ot {
        #[command(subcommand)]
        command: OtCommand,
    },
}

#[derive(Debug, Subcommand)]
enum OtCommand {
    /// Solve one transport problem and print the plan as CSV.
    Solve(SolveArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NoiseKind {
    Joint,
    Sym,
    Asym,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    classes: u32,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u32).range(1..))]
    dim: u32,
    /// Size of the largest class.
    #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u32).range(1..))]
    head: u32,
    /// Imbalance factor, largest over smallest class.
    #[arg(long = "if", default_value_t = 100.0, value_parser = config::at_least_one)]
    imbalance: f64,
    #[arg(long, value_enum, default_value_t = NoiseKind::Joint)]
    noise: NoiseKind,
    #[arg(long, default_value_t = 0.5, value_parser = config::unit_closed)]
    eta: f64,
    /// Target class for asymmetric noise; defaults to the smallest class.
    #[arg(long)]
    target: Option<usize>,
    /// Distance between class means in units of the within-class spread.
    #[arg(long, default_value_t = 10.0, value_parser = config::nonnegative)]
    sep: f64,
    #[arg(long, default_value_t = 1.0, value_parser = config::nonnegative)]
    std: f64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    test_per_class: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    /// Training embeddings (OTSB).
    #[arg(long)]
    train: PathBuf,
    /// Training labels (CSV).
    #[arg(long)]
    labels: PathBuf,
    /// Optional balanced test embeddings, for per-epoch test accuracy.
    #[arg(long, requires = "test_labels")]
    test: Option<PathBuf>,
    #[arg(long, requires = "test")]
    test_labels: Option<PathBuf>,
    /// Number of classes; inferred from the labels when omitted.
    #[arg(long)]
    classes: Option<usize>,
    /// Output directory for `epochs.jsonl` and `subset.csv`.
    #[arg(long)]
    out: PathBuf,
    /// TOML file with defaults for the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    tunables: Tunables,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Subset CSV written by `extract`.
    #[arg(long)]
    subset: PathBuf,
    /// Label CSV with a truth column.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    classes: Option<usize>,
}

#[derive(Debug, Args)]
struct SolveArgs {
    /// Cost matrix CSV, one row per sample.
    #[arg(long)]
    cost: PathBuf,
    /// Row marginal as a one-row or one-column CSV; uniform when omitted.
    #[arg(long)]
    a: Option<PathBuf>,
    /// Column marginal; uniform when omitted.
    #[arg(long)]
    b: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-2, value_parser = config::positive)]
    gamma: f64,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    sinkhorn_iters: u64,
    #[arg(long, default_value_t = 1e-9, value_parser = config::positive)]
    sinkhorn_tol: f64,
    /// Solve the unregularized problem with the transportation simplex.
    #[arg(long)]
    exact: bool,
    /// Write the plan here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(&args),
        Command::Extract(args) => commands::extract(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
        Command::Ot {
            command: OtCommand::Solve(args),
        } => commands::solve(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
