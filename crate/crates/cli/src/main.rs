use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use gammakde_cli::commands::{
    run_bandwidth, run_estimate, run_simulate, run_validate, BandwidthArgs, EstimateArgs, SimulateArgs,
    ValidateArgs,
};
use gammakde_cli::init_threads;

/// Gamma-kernel density and density-derivative estimation on [0, ∞)^d.
///
/// GAMMAKDE_THREADS caps the number of worker threads.
#[derive(Debug, Parser)]
#[command(name = "gammakde", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate the density or a partial derivative on a grid.
    Estimate(EstimateArgs),
    /// Compute a bandwidth rule.
    Bandwidth(BandwidthArgs),
    /// Run a Monte Carlo MISE experiment.
    Simulate(SimulateArgs),
    /// Run the validation checks.
    Validate(ValidateArgs),
}

fn emit(text: &str, output: Option<&Path>) -> Result<()> {
    match output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<bool> {
    init_threads()?;
    match cli.command {
        Command::Estimate(a) => {
            let (grid, report) = run_estimate(&a)?;
            eprintln!("{report}");
            emit(&grid, a.output.as_deref())?;
        }
        Command::Bandwidth(a) => emit(&run_bandwidth(&a)?, a.output.as_deref())?,
        Command::Simulate(a) => emit(&run_simulate(&a)?, a.output.as_deref())?,
        Command::Validate(a) => {
            let (table, ok) = run_validate(&a);
            print!("{table}");
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
