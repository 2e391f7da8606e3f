//! `simcov`: stochastic kriging experiments with covariates.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numeric failure,
//! 1 for I/O problems.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<simcov::Error> for CliError {
    fn from(e: simcov::Error) -> Self {
        if let simcov::Error::Config(m) = e {
            CliError::Config(m)
        } else if e.is_config() {
            CliError::Config(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(name = "simcov", version, about = "Stochastic kriging experiments for simulation with covariates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Source {
    /// TOML configuration file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Named preset shipped with the tool (see `simcov presets`).
    #[arg(long, short, conflicts_with = "config")]
    preset: Option<String>,
    /// Override a key, e.g. `--set experiment.macro_reps=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long, short, default_value = "simcov-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Static-sampling convergence of maximal IMSE and IPFS.
    Convergence(Source),
    /// Static sampling against the Adaptive MSE Procedure.
    AdaptiveCompare(Source),
    /// Predict the number of covariate points reaching a target maximal IMSE.
    PredictM(PredictArgs),
    /// Min-max allocation of a simulation budget across designs.
    Allocate(AllocateArgs),
    /// Fit one set of models and dump them as JSON.
    Fit(FitArgs),
    /// Dump kernel eigenvalues for the designs in `[allocate]`.
    Eigs(Source),
    /// List the shipped presets.
    Presets,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Config with `[predict_m]`; runs subsampling, extrapolation and verification.
    #[command(flatten)]
    source: Source,
    /// Target maximal IMSE; overrides `predict_m.c0`.
    #[arg(long)]
    c0: Option<f64>,
    /// Use a given fitted line instead of data.
    #[arg(long, requires = "intercept", allow_hyphen_values = true)]
    slope: Option<f64>,
    #[arg(long, requires = "slope", allow_hyphen_values = true)]
    intercept: Option<f64>,
    /// A `(m, max IMSE)` observation as `M:VALUE`; repeat for each point.
    #[arg(long = "point", value_name = "M:VALUE", conflicts_with = "slope")]
    points: Vec<String>,
}

#[derive(Args, Debug)]
pub struct AllocateArgs {
    #[command(flatten)]
    source: Source,
    /// Total budget; overrides `allocate.n_tot`.
    #[arg(long)]
    n_tot: Option<usize>,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    source: Source,
    /// Number of covariate points; defaults to the largest in the schedule.
    #[arg(long)]
    m: Option<usize>,
    /// Macro replication whose streams are used.
    #[arg(long, default_value_t = 0)]
    rep: usize,
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(v) = std::env::var("SIMCOV_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| CliError::Config(format!("SIMCOV_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Convergence(s) => commands::convergence(&s),
        Command::AdaptiveCompare(s) => commands::adaptive_compare(&s),
        Command::PredictM(a) => commands::predict_m(&a),
        Command::Allocate(a) => commands::allocate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Eigs(s) => commands::eigs(&s),
        Command::Presets => {
            for (name, _) in config::PRESETS {
                println!("{name}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("simcov: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
