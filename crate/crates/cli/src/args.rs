use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "spg", version, about = "Stochastic daily precipitation generator")]
pub struct Cli {
    /// Worker threads for the parallel reductions (default: all cores).
    #[arg(long, global = true, env = "SPG_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a dataset with known states.
    GenSynthetic(GenArgs),
    /// Fit the variational posterior to a dataset.
    Fit(FitArgs),
    /// Most likely state sequence under a fitted model.
    Decode(DecodeArgs),
    /// Draw synthetic replicates from a fitted model.
    Simulate(SimulateArgs),
    /// Location statistics, dataset comparison and per-state tables.
    Stats(StatsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Precipitation CSV (long format unless --wide).
    #[arg(long)]
    pub data: PathBuf,
    /// Locations CSV; defaults to locations.csv next to the data.
    #[arg(long)]
    pub locations: Option<PathBuf>,
    /// Read a wide matrix CSV (date,<id>,<id>,...).
    #[arg(long)]
    pub wide: bool,
    /// Values below this many mm count as dry.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Keep only days inside a seasonal window MM-DD:MM-DD, one block per season.
    #[arg(long)]
    pub season: Option<String>,
    /// Split the series into consecutive blocks of this many days.
    #[arg(long, conflicts_with = "season")]
    pub block_days: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct LengthArgs {
    /// Length of a single series.
    #[arg(long, conflicts_with_all = ["blocks", "days"])]
    pub t: Option<usize>,
    /// Number of independent year-blocks.
    #[arg(long, requires = "days")]
    pub blocks: Option<usize>,
    /// Days per block.
    #[arg(long, requires = "blocks")]
    pub days: Option<usize>,
    /// First date of the series (YYYY-MM-DD); block b starts b years later.
    #[arg(long, default_value = "2000-07-01")]
    pub start: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Paper,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, conflicts_with = "params", required_unless_present = "params")]
    pub preset: Option<Preset>,
    /// Model file whose posterior means are the true parameters.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[command(flatten)]
    pub length: LengthArgs,
    #[arg(long, env = "SPG_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Cavi,
    Svb,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, env = "SPG_SEED")]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Relative ELBO change below which CAVI stops.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub svb_iterations: Option<usize>,
    #[arg(long)]
    pub step_exponent: Option<f64>,
    #[arg(long)]
    pub polish_iterations: Option<usize>,
    /// Print progress to stderr every n iterations (0 disables).
    #[arg(long, default_value_t = 10)]
    pub progress_every: usize,
    #[arg(long)]
    pub out_model: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecodeView {
    Starred,
    PosteriorMean,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Parameter view used to score paths.
    #[arg(long, value_enum, default_value = "starred")]
    pub params: DecodeView,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[command(flatten)]
    pub length: LengthArgs,
    #[arg(long, env = "SPG_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Observed long CSV whose statistics the replicates are compared to.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Second dataset to compare against (long CSV).
    #[arg(long)]
    pub data_b: Option<PathBuf>,
    #[arg(long)]
    pub locations_b: Option<PathBuf>,
    /// States CSV as written by decode or gen-synthetic.
    #[arg(long)]
    pub states: Option<PathBuf>,
    /// CSV with a date column; restricts every statistic to those days.
    #[arg(long)]
    pub dates: Option<PathBuf>,
    /// Number of states for the per-state tables (default: largest label seen).
    #[arg(long)]
    pub k: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}
