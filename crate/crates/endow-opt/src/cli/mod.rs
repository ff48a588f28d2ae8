//! The `endow-opt` command line.
//!
//! ```text
//! endow-opt {price|strategy|simulate|verify|sweep} --config <file>
//!           [--out <file>] [--format json|csv] [--threads N] [--seed S]
//! ```
//!
//! Exit codes are a stable contract: 0 success, 1 validation error,
//! 2 check failure, 3 I/O error, 4 overflow.

pub mod commands;
pub mod config;

pub use commands::OutputFormat;
pub use config::{AxisName, RunConfig, SweepAxis, SweepConfig};

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::closedform::EvalError;
use crate::model::ValidationError;
use crate::simulate::{SimError, StrategyError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("one or more verification checks failed")]
    ChecksFailed,
    #[error("i/o error: {0}")]
    Io(String),
    #[error("overflow: {0}")]
    Overflow(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::ChecksFailed => 2,
            CliError::Io(_) => 3,
            CliError::Overflow(_) => 4,
        }
    }
}

impl From<ValidationError> for CliError {
    fn from(err: ValidationError) -> Self {
        CliError::Validation(format!("[{}] {}", err.code(), err))
    }
}

impl From<EvalError> for CliError {
    fn from(err: EvalError) -> Self {
        match err {
            EvalError::Overflow { .. } => CliError::Overflow(err.to_string()),
            _ => CliError::Validation(err.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(err: SimError) -> Self {
        match &err {
            SimError::Eval(EvalError::Overflow { .. }) => CliError::Overflow(err.to_string()),
            SimError::Strategy {
                source: StrategyError::Eval(EvalError::Overflow { .. }),
                ..
            } => CliError::Overflow(err.to_string()),
            _ => CliError::Validation(err.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "endow-opt",
    version,
    about = "Optimal investment with a correlated income stream: closed forms plus a Monte Carlo verification harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Income-stream price table (t, P_t) plus P_T.
    Price(CommonArgs),
    /// Optimal-fraction surface over time and endowment-to-wealth ratio.
    Strategy(CommonArgs),
    /// Simulate the configured strategy; JSON summary plus optional CSV dump.
    Simulate(CommonArgs),
    /// Run the full verification battery; exit 0 only if every check passes.
    Verify(VerifyArgs),
    /// Sweep parameter axes and emit closed-form summary columns.
    Sweep(CommonArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format (price/strategy/sweep default to csv, reports to json).
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Caps the worker threads without affecting results.
    #[arg(long, env = "ENDOW_OPT_THREADS")]
    threads: Option<usize>,
    /// Overrides grid.seed from the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Multiplies the closed-form Lagrange multiplier inside the checks.
    /// Sensitivity control only: values other than 1.0 must fail.
    #[arg(long, hide = true, default_value_t = 1.0)]
    debug_lambda_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

/// Parses argv and runs; returns the process exit code.
pub fn run() -> u8 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("endow-opt: {err}");
            err.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let (common, lambda_scale) = match &cli.command {
        Command::Verify(args) => (&args.common, args.debug_lambda_scale),
        Command::Price(args)
        | Command::Strategy(args)
        | Command::Simulate(args)
        | Command::Sweep(args) => (args, 1.0),
    };

    let raw = std::fs::read_to_string(&common.config)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", common.config.display())))?;
    let mut config = RunConfig::parse(&raw)
        .map_err(|e| CliError::Validation(format!("config: {e}")))?;
    if let Some(seed) = common.seed {
        config.grid.seed = seed;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(common.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;

    let format_for = |default: OutputFormat| match common.format {
        Some(FormatArg::Json) => OutputFormat::Json,
        Some(FormatArg::Csv) => OutputFormat::Csv,
        None => default,
    };

    let (output, pass) = pool.install(|| -> Result<(String, bool), CliError> {
        match &cli.command {
            Command::Price(_) => {
                Ok((commands::cmd_price(&config, format_for(OutputFormat::Csv))?, true))
            }
            Command::Strategy(_) => Ok((
                commands::cmd_strategy(&config, format_for(OutputFormat::Csv))?,
                true,
            )),
            Command::Simulate(_) => {
                if matches!(common.format, Some(FormatArg::Csv)) {
                    return Err(CliError::Validation(
                        "simulate emits a JSON summary; the CSV dump is configured via simulate.dump".into(),
                    ));
                }
                Ok((commands::cmd_simulate(&config)?, true))
            }
            Command::Verify(_) => {
                if matches!(common.format, Some(FormatArg::Csv)) {
                    return Err(CliError::Validation(
                        "verify reports are JSON only".into(),
                    ));
                }
                commands::cmd_verify(&config, lambda_scale)
            }
            Command::Sweep(_) => {
                Ok((commands::cmd_sweep(&config, format_for(OutputFormat::Csv))?, true))
            }
        }
    })?;

    match &common.out {
        Some(path) => std::fs::write(path, &output)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{output}"),
    }

    if pass {
        Ok(())
    } else {
        Err(CliError::ChecksFailed)
    }
}
