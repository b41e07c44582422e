use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crossbar_sim::config::ExperimentSpec;
use crossbar_sim::runner::{self, Command as RunCommand};

/// Analog in-memory computing crossbar simulator.
#[derive(Parser)]
#[command(name = "crossbar-sim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for metrics.csv, summary.json and artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (results are identical for any value).
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Commands {
    /// Train a network (in-memory or hardware-aware, per the config mode).
    Train(RunArgs),
    /// Evaluate a trained model under programming noise and drift.
    InferEval(RunArgs),
    /// Sweep a tile parameter by multiplicative factors, training per factor.
    Sweep(RunArgs),
    /// Fit a device model to a measured response-trace CSV.
    FitDevice(RunArgs),
    /// Simulate a device response curve and write response.csv.
    PlotResponse(RunArgs),
}

fn load_spec(args: &RunArgs) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut spec = ExperimentSpec::from_toml(&text)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    Ok(spec)
}

fn run(args: &RunArgs, command: RunCommand) -> Result<()> {
    let spec = load_spec(args)?;
    let output = runner::execute(&spec, command, &args.out, args.workers)?;
    println!(
        "wrote {} records to {}",
        output.records.len(),
        args.out.join("metrics.csv").display()
    );
    for agg in runner::aggregate(&output.records) {
        if agg.metric == "final_test_accuracy" || agg.metric == "test_accuracy" {
            println!(
                "{} @ {}: mean {:.4} std {:.4} (n={})",
                agg.metric, agg.time_s, agg.mean, agg.std, agg.n
            );
        }
        if agg.metric == "residual_rms" {
            println!("fit residual (rms, normalized units): {:.6}", agg.mean);
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Commands::Train(args) => run(args, RunCommand::Train),
        Commands::InferEval(args) => run(args, RunCommand::InferEval),
        Commands::Sweep(args) => run(args, RunCommand::Sweep),
        Commands::FitDevice(args) => run(args, RunCommand::FitDevice),
        Commands::PlotResponse(args) => run(args, RunCommand::PlotResponse),
    }
}
