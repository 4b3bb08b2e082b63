//! `gridform`: batch runs of the grid-forming inverter stability toolkit.
//!
//! Exit codes: 0 success, 2 configuration error, 3 simulation error,
//! 4 degenerate analysis.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Context;
use config::ScenarioConfig;
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "gridform",
    version,
    about = "Transient stability runs for a current-limited grid-forming inverter"
)]
struct Cli {
    /// Print the default scenario file and exit.
    #[arg(long)]
    print_defaults: bool,

    /// Scenario file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, overriding `output_dir` of the scenario.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Strategy name, or a comma-separated list for `cct` and `sweep`.
    #[arg(long, global = true)]
    strategy: Option<String>,

    /// Bisection tolerance on the clearing time, s.
    #[arg(long, global = true)]
    tol: Option<f64>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the scenario and write trajectory.csv.
    Simulate,
    /// Critical clearing time per strategy, written to cct.csv.
    Cct,
    /// Domain-of-attraction boundary, written to doa.csv.
    Doa,
    /// Parameter sweep: fault_voltage, reference_power, horizon or impedance_error.
    Sweep { kind: String },
    /// Print the landmark angles of the post-fault grid.
    Landmarks,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.print_defaults {
        print!("{}", ScenarioConfig::defaults_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(CliError::Config(
            "usage error: no subcommand given; see --help".into(),
        ));
    };
    let config = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    let tol = cli.tol.unwrap_or(config.cct.tol);
    if !(tol > 0.0) {
        return Err(CliError::Config(format!(
            "invalid configuration: --tol {tol} must be positive"
        )));
    }
    let ctx = Context {
        out: cli.out.clone().unwrap_or_else(|| config.output_dir.clone()),
        strategy: cli.strategy.clone(),
        config,
    };
    match command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Cct => commands::cct(&ctx, tol),
        Command::Doa => commands::doa(&ctx),
        Command::Sweep { kind } => commands::run_sweep(&ctx, commands::sweep_kind(&kind)?, tol),
        Command::Landmarks => commands::landmarks(&ctx),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gridform: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
