//! `warpflow` — batch pipeline for comparing regional mobility flows
//! against epidemic case counts with dynamic time warping.
//!
//! Subcommands: `run` (full pipeline), `lag-sweep` (distance per candidate
//! lag), `synth` (seeded synthetic dataset), `report` (re-derive
//! classification and diagnostics from an existing results.csv).
//!
//! Exit codes: 0 success, 1 configuration error, 2 ingest error,
//! 3 no region survived filtering, 4 internal error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use warpflow_core::analysis::AnalysisError;
use warpflow_core::ingest::IngestError;
use warpflow_core::preprocess::PreprocessError;

use config::RunArgs;

#[derive(Debug, Parser)]
#[command(name = "warpflow", version, about, disable_help_subcommand = true)]
enum Cli {
    /// Run the full pipeline and export results, classes and diagnostics.
    Run(RunArgs),
    /// Score every region across a range of candidate lags.
    LagSweep {
        #[command(flatten)]
        args: RunArgs,
        /// Smallest lag to evaluate [default: 0].
        #[arg(long)]
        lag_min: Option<u32>,
        /// Largest lag to evaluate, inclusive [default: 30].
        #[arg(long)]
        lag_max: Option<u32>,
    },
    /// Generate a synthetic dataset plus its ground-truth manifest.
    Synth {
        /// Scenario description (TOML).
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-derive classified.csv and diagnostics.txt from a results.csv.
    Report {
        /// Existing results.csv from a previous run.
        #[arg(long)]
        results: PathBuf,
        /// Region table the results were computed from.
        #[arg(long)]
        regions: PathBuf,
        /// Output directory; created if missing.
        #[arg(long)]
        out: PathBuf,
    },
}

/// Error with the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Ingest(IngestError),
    EmptyAfterFilter,
    Internal(String),
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError::Config(message.into())
    }

    pub fn internal(message: impl Into<String>) -> Self {
        CliError::Internal(message.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Ingest(_) => 2,
            CliError::EmptyAfterFilter => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Ingest(e) => write!(f, "ingest error: {e}"),
            CliError::EmptyAfterFilter => write!(f, "no region survived filtering"),
            CliError::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        CliError::Ingest(e)
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Preprocess(PreprocessError::EmptyAfterFilter) => {
                CliError::EmptyAfterFilter
            }
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WARPFLOW_LOG", "info"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let result = match cli {
        Cli::Run(args) => commands::run(&args),
        Cli::LagSweep {
            args,
            lag_min,
            lag_max,
        } => commands::lag_sweep(&args, lag_min, lag_max),
        Cli::Synth {
            scenario,
            out,
            seed,
        } => commands::synth(&scenario, &out, seed),
        Cli::Report {
            results,
            regions,
            out,
        } => commands::report(&results, &regions, &out),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("warpflow: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
