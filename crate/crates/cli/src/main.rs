//! Batch experiment driver: coefficient tables, identity suites, ensemble
//! simulations and micro/macro comparison campaigns, with reproducible
//! outputs (CSV + JSON, each echoing the resolved config and its hash).
//!
//! Exit codes: 0 success, 1 scientific failure (identity residual or
//! z-threshold exceeded), 2 validation error, 3 numerical error.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use config::Config;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "phoscat",
    version,
    about = "Wave-energy scattering off a Poissonian thermostat: tables, simulations, comparisons"
)]
struct Cli {
    /// TOML experiment configuration (defaults apply for missing keys)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the master seed from the config
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores); results are identical either way
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Interface coefficient table and scalar weights
    Coeffs,
    /// Identity suite over a (gamma, mu) matrix
    Identities,
    /// Ensemble simulation with observable dumps
    Simulate,
    /// Micro/macro comparison campaign (T = 0 packet)
    Compare,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let mut cfg = match &cli.config {
        Some(path) => match Config::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
        },
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    if let Some(workers) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
        {
            eprintln!("error: building worker pool: {e}");
            return ExitCode::from(2);
        }
    }

    let result = match cli.command {
        Command::Coeffs => commands::cmd_coeffs(&cfg, &cli.out),
        Command::Identities => commands::cmd_identities(&cfg, &cli.out),
        Command::Simulate => commands::cmd_simulate(&cfg, &cli.out),
        Command::Compare => commands::cmd_compare(&cfg, &cli.out),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
