//! Command-line front end for `cbp-mde`.
//!
//! Every subcommand writes into an output directory (`--out`, or the
//! `CBP_MDE_OUT_DIR` environment variable) together with a `manifest.json`
//! listing each emitted file and its SHA-256.
//!
//! Exit codes: 0 success, 2 usage, 3 I/O, 4 estimation impossible.

pub mod commands;
pub mod config;
pub mod output;
pub mod tree_csv;

use std::fmt;
use std::path::PathBuf;

use cbp_mde::Error as CoreError;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub const OUT_DIR_ENV: &str = "CBP_MDE_OUT_DIR";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(anyhow::Error),
    /// The data carry no information about the offspring law.
    EstimationImpossible {
        reason: &'static str,
        message: String,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
            CliError::EstimationImpossible { .. } => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Io(e) => write!(f, "I/O error: {e:#}"),
            CliError::EstimationImpossible { message, .. } => {
                write!(f, "estimation impossible: {message}")
            }
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NoProgenitors => CliError::EstimationImpossible {
                reason: "no_progenitors",
                message: e.to_string(),
            },
            CoreError::NoFiniteValue => CliError::EstimationImpossible {
                reason: "no_finite_disparity",
                message: e.to_string(),
            },
            other => CliError::Usage(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "cbp-mde",
    version,
    about = "Minimum disparity estimation for controlled branching processes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one family tree and write it as CSV.
    Simulate(SimulateArgs),
    /// Estimate the offspring parameter from a family tree.
    Estimate(EstimateArgs),
    /// Alpha-influence curves over gross-error locations.
    Influence(InfluenceArgs),
    /// Relative potential bias of HD and NED against LD for L = 0, 8, 20.
    BiasTables(BiasTablesArgs),
    /// Monte Carlo grid of contaminated models.
    Grid(ExperimentArgs),
    /// Per-generation MSE ratios in the uncontaminated model.
    Efficiency(ExperimentArgs),
    /// Standardized-error normality diagnostic in the uncontaminated model.
    Normality(ExperimentArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutArg {
    /// Output directory.
    #[arg(long, env = OUT_DIR_ENV)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlKind {
    /// phi(k) ~ Poisson(lambda k).
    Poisson,
    /// phi(k) = floor(lambda k).
    Deterministic,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 7.0)]
    pub theta0: f64,
    #[arg(long, default_value_t = 0.3)]
    pub lambda: f64,
    #[arg(long, default_value_t = 1)]
    pub z0: u64,
    #[arg(long, default_value_t = 10)]
    pub gens: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = ControlKind::Poisson)]
    pub control: ControlKind,
    /// Every individual has exactly this many offspring (overrides the
    /// Poisson offspring law).
    #[arg(long)]
    pub offspring_point: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateArgs {
    /// Family-tree CSV as written by `simulate`.
    #[arg(long, conflicts_with_all = ["theta0", "lambda", "z0", "gens", "seed", "control", "offspring_point"])]
    pub tree: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// ld, hd, ned or all.
    #[arg(long, default_value = "all")]
    pub disparity: String,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InfluenceArgs {
    #[arg(long, default_value_t = 7.0)]
    pub theta0: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.2")]
    pub alphas: Vec<f64>,
    /// Gross-error locations; defaults to 0..=30 then 40, 60, ..., 400.
    #[arg(long, value_delimiter = ',')]
    pub l_values: Option<Vec<usize>>,
    #[arg(long, default_value = "all")]
    pub disparity: String,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BiasTablesArgs {
    #[arg(long, default_value_t = 7.0)]
    pub theta0: f64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExperimentArgs {
    /// TOML file with keys theta0, lambda, z0, replications, seed, alphas,
    /// l_values, disparities. Flags override file values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub theta0: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub z0: Option<u64>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Horizon of the uncontaminated model.
    #[arg(long, default_value_t = 10)]
    pub gens: usize,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub l_values: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub disparities: Option<Vec<String>>,
    #[command(flatten)]
    pub out: OutArg,
}

/// Runs a parsed command; returns the paths written.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Estimate(a) => commands::estimate(&a),
        Command::Influence(a) => commands::influence(&a),
        Command::BiasTables(a) => commands::bias_tables(&a),
        Command::Grid(a) => commands::grid(&a),
        Command::Efficiency(a) => commands::efficiency(&a),
        Command::Normality(a) => commands::normality(&a),
    }
}
