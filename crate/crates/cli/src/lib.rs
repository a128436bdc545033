//! Command-line experiment runner for `proxflow`.
//!
//! Exit codes: 0 on success, 1 for invalid input or configuration, 2 when a
//! numerical routine fails.

pub mod commands;
pub mod config;
pub mod lemmas;
pub mod table;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::ExperimentConfig;
use table::ResultTable;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<proxflow::Error> for CliError {
    fn from(e: proxflow::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "proxflow", version, about = "Convergence studies for proximal Gaussian propagation and filtering")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads for independent (h, seed) cells.
    #[arg(long, global = true, env = "PROXFLOW_THREADS")]
    pub threads: Option<usize>,

    /// CSV output path; overrides the config, defaults to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Optional JSON mirror of the CSV table.
    #[arg(long, global = true)]
    pub json: Option<PathBuf>,

    /// Replaces the configured seed list with this single seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    /// TOML experiment file.
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Terminal propagation error against the exact solution for each step size.
    ConvergePropagation(ConfigArg),
    /// Filter error against its continuous-time limit on shared Brownian paths.
    ConvergeFilter(ConfigArg),
    /// RMSE and steady covariance of both filter updates over seeds.
    CompareFilters(ConfigArg),
    /// Randomized checks of the optimal-transport identities.
    LemmaChecks {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Dimensions, as an inclusive range "1..5" or a list "1,2,3".
        #[arg(long, default_value = "1..5")]
        dims: String,
    },
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        Some(0) => Err(CliError::Validation("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Validation(format!("cannot start thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Runs a parsed command line and writes its table.
pub fn execute(cli: &Cli) -> Result<ResultTable, CliError> {
    let (table, output) = with_threads(cli.threads, || -> Result<_, CliError> {
        match &cli.command {
            Command::LemmaChecks { trials, dims } => {
                let dims = lemmas::parse_dims(dims)?;
                let table = lemmas::lemma_checks(*trials, &dims, cli.seed.unwrap_or(0))?;
                Ok((table, config::OutputPaths::default()))
            }
            Command::ConvergePropagation(arg) | Command::ConvergeFilter(arg) | Command::CompareFilters(arg) => {
                let cfg = ExperimentConfig::load(&arg.config, cli.seed)?;
                let table = match &cli.command {
                    Command::ConvergePropagation(_) => commands::converge_propagation(&cfg)?,
                    Command::ConvergeFilter(_) => commands::converge_filter(&cfg)?,
                    _ => commands::compare_filters(&cfg)?,
                };
                Ok((table, cfg.output))
            }
        }
    })??;
    let csv = cli.out.as_ref().or(output.csv.as_ref());
    let json = cli.json.as_ref().or(output.json.as_ref());
    table.save(csv.map(PathBuf::as_path), json.map(PathBuf::as_path))?;
    Ok(table)
}
