//! `coded-unlearn`: generate data, train coded ensembles into session
//! directories, unlearn and verify samples, and run the benchmark sweeps.

mod commands;
mod config;
mod failure;
mod session;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use coded_unlearning::bench::OutputFormat;
use coded_unlearning::dataset::{ColumnSelector, SyntheticKind};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "coded-unlearn", version, about = "Coded machine unlearning for ridge-regression ensembles")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug, Default)]
pub struct Global {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output path (CSV for gen-data, session directory for train, results file otherwise).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for the global pool.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(ValueEnum, Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum DensityArg {
    Minimal,
    Bernoulli,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset CSV plus a `<out>.spec.json` sidecar.
    GenData(GenArgs),
    /// Train a coded ensemble into a session directory (`--out`).
    Train(TrainArgs),
    /// Predict with a trained session, in the data's original units.
    Predict(PredictArgs),
    /// Forget samples from a session and retrain the affected learners.
    Unlearn(UnlearnArgs),
    /// Retrain everything from the surviving rows and compare with the session model.
    Verify(SessionArgs),
    /// Run a shard-count sweep described by a JSON spec (`--config`).
    BenchTradeoff(BenchArgs),
    /// Run an influence-removal study described by a JSON spec (`--config`).
    BenchInfluence(BenchArgs),
}

#[derive(Args, Serialize, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub kind: Option<SyntheticKind>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Degrees of freedom for chisquare-poly.
    #[arg(long)]
    pub dof: Option<f64>,
    #[arg(long)]
    pub degree: Option<u32>,
    /// Hidden layer widths for the mlp kind, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    /// Emit the polynomial expansion as the feature columns.
    #[arg(long)]
    pub expose_expanded: Option<bool>,
}

#[derive(Args, Serialize, Debug)]
pub struct TrainArgs {
    /// Training CSV (all-numeric, one header row).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Response column, by name or zero-based index.
    #[arg(long)]
    pub response: Option<ColumnSelector>,
    /// Uncoded shard count.
    #[arg(long)]
    pub s: Option<usize>,
    /// Coded shard count; defaults to s / tau, or s.
    #[arg(long)]
    pub r: Option<usize>,
    /// Rate s / r.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, value_enum)]
    pub density: Option<DensityArg>,
    /// Bernoulli density of the generator matrix.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Random cosine projection to this many features.
    #[arg(long)]
    pub projection_dim: Option<usize>,
    #[arg(long)]
    pub intercept: Option<bool>,
    /// Min-max normalize features and response using the training rows.
    #[arg(long)]
    pub normalize: Option<bool>,
    /// Train on a seeded subset of this size and keep the rest as a holdout.
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Replace an existing session.
    #[arg(long)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub force: bool,
}

#[derive(Args, Serialize, Debug)]
pub struct SessionArgs {
    #[arg(long)]
    pub session: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub session: Option<PathBuf>,
    /// CSV holding the session's feature columns by name; the response column is optional.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
pub struct UnlearnArgs {
    #[arg(long)]
    pub session: Option<PathBuf>,
    /// Sample ids, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub ids: Option<Vec<usize>>,
    /// JSON file holding a list of ids.
    #[arg(long)]
    pub ids_file: Option<PathBuf>,
    /// CSV of the rows to forget: `sample_id`, the feature columns and the
    /// response, in original units. Rows must match the stored samples.
    #[arg(long)]
    pub rows: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
pub struct BenchArgs {
    /// Override the spec's run count.
    #[arg(long)]
    pub runs: Option<usize>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.global.threads {
        if n == 0 {
            return Err(failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let g = &cli.global;
    match &cli.command {
        Command::GenData(a) => commands::gen_data(g, a),
        Command::Train(a) => commands::train(g, a),
        Command::Predict(a) => commands::predict(g, a),
        Command::Unlearn(a) => commands::unlearn_cmd(g, a),
        Command::Verify(a) => commands::verify(g, a),
        Command::BenchTradeoff(a) => commands::bench_tradeoff(g, a),
        Command::BenchInfluence(a) => commands::bench_influence(g, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(failure::exit_code(&err))
        }
    }
}
