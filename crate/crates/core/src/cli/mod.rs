//! Command-line frontend: `sigma`, `compare`, `moments`, `levy`.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ConfigError, RunConfig};
use crate::error::Error;

mod commands;

pub use commands::{cmd_compare, cmd_levy, cmd_moments, cmd_sigma, Outcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_QUALITY: i32 = 3;
pub const EXIT_FAILURES: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "fastslow",
    version,
    about = "Deterministic fast-slow maps and their stochastic limits"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the limit variance with Green-Kubo and block moments.
    Sigma(RunArgs),
    /// Terminal densities of map ensembles, SDE limits and the exact CIR law.
    Compare(RunArgs),
    /// First-moment curves E|x(t)|.
    Moments(RunArgs),
    /// Superdiffusive map, Marcus SDE and tail-exponent fits.
    Levy(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Config file (TOML, or a run.json from an earlier run) or preset name.
    #[arg(long)]
    pub config: String,
    /// Master seed; defaults to the config's seed (0 if unset).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the realization count.
    #[arg(long)]
    pub realizations: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] Error),
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Io { .. }) | CliError::Config(_) => EXIT_CONFIG,
            CliError::Model(Error::TooManyFailures { .. }) => EXIT_FAILURES,
            CliError::Model(Error::NonFinite { .. })
            | CliError::Model(Error::TransformExit { .. }) => 1,
            CliError::Model(_) => EXIT_CONFIG,
            CliError::Io(_) => 1,
        }
    }
}

/// Resolved inputs of one command.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub workers: usize,
    pub out: PathBuf,
}

impl Run {
    pub fn from_args(args: &RunArgs) -> Result<Self, CliError> {
        let mut config = RunConfig::load(&args.config)?;
        if let Some(seed) = args.seed {
            config.seed = seed;
        }
        if let Some(n) = args.realizations {
            config.realizations = n;
        }
        if config.realizations == 0 {
            return Err(ConfigError::Invalid("realizations must be positive".into()).into());
        }
        let out = args
            .out
            .clone()
            .or_else(|| config.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        // The echo records where outputs went but never the worker count.
        config.out = Some(out.clone());
        Ok(Self {
            config,
            workers: args.workers.max(1),
            out,
        })
    }
}

pub fn execute(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Sigma(a) => cmd_sigma(&Run::from_args(a)?),
        Command::Compare(a) => cmd_compare(&Run::from_args(a)?),
        Command::Moments(a) => cmd_moments(&Run::from_args(a)?),
        Command::Levy(a) => cmd_levy(&Run::from_args(a)?),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
