//! Command line front end for the pigeonhole samplers.
//!
//! Four verbs: `simulate` runs a simulation study, `fit` runs the samplers
//! on a ratings table, `diagnose` recomputes diagnostics for existing chain
//! files, and `validate` checks a config and echoes the normalized
//! experiment without running anything.
//!
//! Exit codes: 0 on success, 1 when at least one replication failed, 2 for
//! configuration and input errors.

mod config;
mod experiment;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{load_config, Mode, Overrides};
use experiment::DiagnoseRequest;

#[derive(Parser)]
#[command(
    name = "pigeonhole",
    version,
    about = "Subset Langevin and Gibbs samplers for crossed mixed effects models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation study described by a config file
    Simulate(RunArgs),
    /// Run the samplers on a real ratings table described by a config file
    Fit(RunArgs),
    /// Recompute summaries, distances, traces, and the barycenter for
    /// existing chain files
    Diagnose(DiagnoseArgs),
    /// Check a config file and echo the normalized experiment
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (TOML)
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Master seed, overriding the config
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Zero wall-clock columns so outputs are byte-stable across runs
    #[arg(long)]
    canonical: bool,
    /// Compare against a cached benchmark chain instead of running Gibbs
    #[arg(long, value_name = "CHAIN.CSV")]
    benchmark: Option<PathBuf>,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Benchmark chain the inputs are compared against
    #[arg(long, value_name = "CHAIN.CSV")]
    benchmark: PathBuf,
    /// Output directory for the diagnostic tables
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Zero wall-clock columns in the trace files
    #[arg(long)]
    canonical: bool,
    /// Trailing sample window for convergence traces
    #[arg(long, default_value_t = 500)]
    window: usize,
    /// Grid size for the barycenter quantile table
    #[arg(long, default_value_t = 1000)]
    grid: usize,
    /// Chain CSV files to diagnose
    #[arg(required = true, value_name = "CHAIN.CSV")]
    chains: Vec<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// Experiment config file (TOML)
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
}

fn fail(error: &anyhow::Error) -> ExitCode {
    eprintln!("error: {error:#}");
    ExitCode::from(2)
}

fn run(args: &RunArgs, verb: &str) -> ExitCode {
    let overrides = Overrides {
        seed: args.seed,
        out: args.out.clone(),
        benchmark: args.benchmark.clone(),
        canonical: args.canonical,
    };
    let cfg = match load_config(&args.config, &overrides) {
        Ok(cfg) => cfg,
        Err(e) => return fail(&e),
    };
    let mode_fits = match verb {
        "simulate" => cfg.mode.is_simulation(),
        _ => cfg.mode == Mode::RealData,
    };
    if !mode_fits {
        let hint = if cfg.mode == Mode::RealData { "fit" } else { "simulate" };
        return fail(&anyhow::anyhow!(
            "mode: {verb} cannot run a {} experiment; use the {hint} verb",
            cfg.mode
        ));
    }
    match experiment::run_experiment(&cfg) {
        Ok(outcome) if outcome.failed == 0 => {
            println!(
                "completed {} of {} replications into {}",
                outcome.completed,
                cfg.replications,
                cfg.out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Ok(outcome) => {
            eprintln!(
                "completed {} of {} replications; {} failed",
                outcome.completed, cfg.replications, outcome.failed
            );
            ExitCode::from(1)
        }
        Err(e) => fail(&e),
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Simulate(args) => run(&args, "simulate"),
        Command::Fit(args) => run(&args, "fit"),
        Command::Diagnose(args) => {
            let request = DiagnoseRequest {
                benchmark: args.benchmark,
                chains: args.chains,
                out_dir: args.out,
                window: args.window,
                grid: args.grid,
                canonical: args.canonical,
            };
            match experiment::diagnose(&request) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(&e),
            }
        }
        Command::Validate(args) => {
            match load_config(&args.config, &Overrides::default()) {
                Ok(cfg) => {
                    print!("{}", config::echo(&cfg));
                    println!("config ok");
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
    }
}
