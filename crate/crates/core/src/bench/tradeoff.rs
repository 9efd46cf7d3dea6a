use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{default_runs, default_true, derive_seed, mean_std, prepare_run, stream, validate_preprocess, DataSource, Preprocess, RunData};
use crate::ensemble::{learn, surviving, unlearn, DensityMode, LearnConfig, UnlearnOptions, UnlearnRequest};
use crate::error::{Error, Result};

/// A performance-vs-unlearning-cost sweep: every `(λ, τ, s)` combination is
/// one cell, each evaluated over `runs` fresh splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub dataset: String,
    pub source: DataSource,
    #[serde(flatten)]
    pub preprocess: Preprocess,
    pub lambdas: Vec<f64>,
    /// Code rates τ = s/r.
    pub rates: Vec<f64>,
    /// Uncoded shard counts s, shared by every rate.
    pub shard_counts: Vec<usize>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub seed: u64,
    #[serde(default = "default_density")]
    pub density: DensityMode,
    /// Evaluate cells concurrently. Results do not depend on it.
    #[serde(default = "default_true")]
    pub parallel_cells: bool,
    /// Train weak learners concurrently inside a cell (noisier timings).
    #[serde(default)]
    pub parallel_learners: bool,
}

fn default_density() -> DensityMode {
    DensityMode::Minimal
}

/// One `(λ, τ, s)` point of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub lambda: f64,
    pub tau: f64,
    pub s: usize,
    pub r: usize,
}

impl Cell {
    /// Seed label depending only on what the cell computes, so adding or
    /// reordering cells leaves the others' results unchanged.
    fn key(&self) -> u64 {
        derive_seed(self.s as u64, &[self.r as u64, self.lambda.to_bits()])
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        validate_preprocess(&self.preprocess, self.runs)?;
        if self.lambdas.is_empty() || self.rates.is_empty() || self.shard_counts.is_empty() {
            return Err(Error::InvalidSpec("sweep has no cells".into()));
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
            return Err(Error::InvalidSpec(format!("lambda must be >= 0, got {l}")));
        }
        if let DensityMode::Bernoulli { rho } = self.density {
            if !(rho > 0.0 && rho <= 1.0) {
                return Err(Error::InvalidSpec(format!("rho must be in (0, 1], got {rho}")));
            }
        }
        self.cells().map(|_| ())
    }

    /// Cells in output order: λ outermost, then τ, then s.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        let mut cells = Vec::new();
        for &lambda in &self.lambdas {
            for &tau in &self.rates {
                for &s in &self.shard_counts {
                    if s == 0 || !(tau.is_finite() && tau >= 1.0) {
                        return Err(Error::InvalidSpec(format!("need s >= 1 and tau >= 1, got s = {s}, tau = {tau}")));
                    }
                    let r = (s as f64 / tau).round() as usize;
                    if r == 0 || (r as f64 * tau - s as f64).abs() > 1e-9 * s as f64 {
                        return Err(Error::InvalidSpec(format!("s = {s} is not a multiple of tau = {tau}")));
                    }
                    cells.push(Cell {
                        index: cells.len(),
                        lambda,
                        tau,
                        s,
                        r,
                    });
                }
            }
        }
        Ok(cells)
    }
}

/// Averages of one sweep cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffRecord {
    pub dataset: String,
    pub s: usize,
    pub r: usize,
    pub tau: f64,
    pub rho_mode: String,
    pub lambda: f64,
    /// Feature dimension before the intercept column (projection or raw).
    #[serde(rename = "D")]
    pub dim: usize,
    pub n_train: usize,
    pub shard_size: usize,
    pub runs: usize,
    pub test_mse_mean: f64,
    pub test_mse_std: f64,
    pub train_mse_mean: f64,
    pub unlearn_seconds_mean: f64,
    pub learn_seconds_mean: f64,
    pub affected_learners_mean: f64,
    /// Affected learners × n̄ × D'² with D' the learner input width.
    pub cost_proxy: f64,
    pub test_mse_pre_mean: f64,
    /// Mean train MSE exceeded mean test MSE.
    pub train_exceeds_test: bool,
    pub error: Option<String>,
    /// Post-unlearn test MSE of each run.
    #[serde(skip)]
    pub test_mse_runs: Vec<f64>,
    /// Retrained learners of each run.
    #[serde(skip)]
    pub affected_runs: Vec<usize>,
}

struct RunOutcome {
    test_pre: f64,
    test_post: f64,
    train: f64,
    unlearn_seconds: f64,
    learn_seconds: f64,
    affected: usize,
}

fn run_cell(data: &RunData, cell: &Cell, spec: &SweepSpec, run: usize) -> Result<RunOutcome> {
    let density = match spec.density {
        // A code with r = 1 is a single all-ones column whatever ρ says.
        DensityMode::Bernoulli { .. } if cell.r == 1 => DensityMode::Bernoulli { rho: 1.0 },
        d => d,
    };
    let config = LearnConfig {
        s: cell.s,
        r: cell.r,
        density,
        lambda: cell.lambda,
        seed: derive_seed(spec.seed, &[stream::CODE, cell.key(), run as u64]),
        parallel: spec.parallel_learners,
    };
    let mut learned = learn(&data.train, &config, data.feature_map.clone())?;
    let test_pre = learned.model.mse(data.test.features(), data.test.response())?;

    let active: Vec<usize> = learned.store.active_ids().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[stream::PICK, cell.key(), run as u64]));
    let id = active[rng.random_range(0..active.len())];
    let request = UnlearnRequest::from_dataset(&data.train, &[id])?;
    let report = unlearn(
        &mut learned.model,
        &mut learned.store,
        &request,
        UnlearnOptions {
            parallel: spec.parallel_learners,
        },
    )?;

    let survivors = surviving(&data.train, &learned.store);
    Ok(RunOutcome {
        test_pre,
        test_post: learned.model.mse(data.test.features(), data.test.response())?,
        train: learned.model.mse(survivors.features(), survivors.response())?,
        unlearn_seconds: report.total_retrain_seconds(),
        learn_seconds: learned.learn_seconds(),
        affected: report.affected.len(),
    })
}

/// Runs the sweep. Every run reshuffles and resplits the data, learns each
/// cell, unlearns one uniformly chosen training sample and measures the
/// updated model. A cell whose run fails is reported with its error instead
/// of aborting the sweep.
pub fn run_tradeoff(spec: &SweepSpec) -> Result<Vec<TradeoffRecord>> {
    spec.validate()?;
    let cells = spec.cells()?;
    let full = spec.source.load()?;
    let runs: Vec<RunData> = (0..spec.runs)
        .map(|run| prepare_run(&full, &spec.preprocess, spec.seed, run))
        .collect::<Result<_>>()?;

    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..spec.runs).map(move |k| (c, k)))
        .collect();
    let eval = |&(c, k): &(usize, usize)| run_cell(&runs[k], &cells[c], spec, k);
    let outcomes: Vec<Result<RunOutcome>> = if spec.parallel_cells {
        jobs.par_iter().map(eval).collect()
    } else {
        jobs.iter().map(eval).collect()
    };

    let n_train = runs[0].train.len();
    let input_dim = runs[0].train.n_features();
    let dim = spec.preprocess.projection_dim.unwrap_or(input_dim);
    let width = runs[0].feature_map.output_dim(input_dim);
    let mut outcomes = outcomes.into_iter();
    let records = cells
        .iter()
        .map(|cell| {
            let per_run: Vec<Result<RunOutcome>> = outcomes.by_ref().take(spec.runs).collect();
            summarize(spec, cell, n_train, dim, width, per_run)
        })
        .collect();
    Ok(records)
}

fn summarize(
    spec: &SweepSpec,
    cell: &Cell,
    n_train: usize,
    dim: usize,
    width: usize,
    per_run: Vec<Result<RunOutcome>>,
) -> TradeoffRecord {
    let shard_size = n_train / cell.s;
    let mut record = TradeoffRecord {
        dataset: spec.dataset.clone(),
        s: cell.s,
        r: cell.r,
        tau: cell.tau,
        rho_mode: spec.density.label(),
        lambda: cell.lambda,
        dim,
        n_train,
        shard_size,
        runs: spec.runs,
        test_mse_mean: f64::NAN,
        test_mse_std: f64::NAN,
        train_mse_mean: f64::NAN,
        unlearn_seconds_mean: f64::NAN,
        learn_seconds_mean: f64::NAN,
        affected_learners_mean: f64::NAN,
        cost_proxy: f64::NAN,
        test_mse_pre_mean: f64::NAN,
        train_exceeds_test: false,
        error: None,
        test_mse_runs: Vec::new(),
        affected_runs: Vec::new(),
    };
    let outcomes = match per_run.into_iter().collect::<Result<Vec<_>>>() {
        Ok(o) => o,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    let mean = |f: fn(&RunOutcome) -> f64| outcomes.iter().map(f).sum::<f64>() / outcomes.len() as f64;
    record.test_mse_runs = outcomes.iter().map(|o| o.test_post).collect();
    record.affected_runs = outcomes.iter().map(|o| o.affected).collect();
    (record.test_mse_mean, record.test_mse_std) = mean_std(&record.test_mse_runs);
    record.test_mse_pre_mean = mean(|o| o.test_pre);
    record.train_mse_mean = mean(|o| o.train);
    record.unlearn_seconds_mean = mean(|o| o.unlearn_seconds);
    record.learn_seconds_mean = mean(|o| o.learn_seconds);
    record.affected_learners_mean = mean(|o| o.affected as f64);
    record.cost_proxy = record.affected_learners_mean * shard_size as f64 * (width * width) as f64;
    record.train_exceeds_test = record.train_mse_mean > record.test_mse_mean;
    record
}

