//! Command-line front end: count-table ingestion, model files, fitting,
//! prediction and the benchmark drivers.

pub mod commands;
pub mod config;
pub mod error;
pub mod model_file;
pub mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{BinaryArgs, Context, FitArgs, MisspecArgs, PredictArgs, SimulateArgs, Table1Args};
use crate::config::Config;
use crate::error::{CliError, EXIT_INPUT};

/// Inverse regression for compositional count data.
#[derive(Debug, Parser)]
#[command(name = "pamir", version, about)]
pub struct Cli {
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON configuration file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    show_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to a count table with a response column.
    Fit(FitArgs),
    /// Predict responses for new count vectors.
    Predict(PredictArgs),
    /// Write a simulated data set.
    Simulate(SimulateArgs),
    /// Recovery and prediction error over an (n, p) grid.
    BenchTable1(Table1Args),
    /// Prediction error under a misspecified mean function.
    BenchMisspec(MisspecArgs),
    /// Binary classification against logistic regression.
    BenchBinary(BinaryArgs),
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Input("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Input(format!("cannot configure thread pool: {e}")))?;
    }
    let config = Config::load(cli.config.as_deref())?;
    let ctx = Context { config, show_config: cli.show_config };
    let outcome = match &cli.command {
        None if cli.show_config => {
            print!("{}", ctx.config.to_json());
            return Ok(0);
        }
        None => return Err(CliError::Input("no command given (see --help)".into())),
        Some(Command::Fit(a)) => commands::cmd_fit(a, ctx)?,
        Some(Command::Predict(a)) => commands::cmd_predict(a, ctx)?,
        Some(Command::Simulate(a)) => commands::cmd_simulate(a, ctx)?,
        Some(Command::BenchTable1(a)) => commands::cmd_bench_table1(a, ctx)?,
        Some(Command::BenchMisspec(a)) => commands::cmd_bench_misspec(a, ctx)?,
        Some(Command::BenchBinary(a)) => commands::cmd_bench_binary(a, ctx)?,
    };
    Ok(outcome.code())
}

/// Parses `std::env::args`, runs, and maps errors to exit codes.
pub fn main_entry() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT as u8)
        }
    }
}
