use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{default_runs, mean_std, prepare_run, validate_preprocess, DataSource, Preprocess, RunData};
use crate::dataset::{RemovalMode, SortedColumns};
use crate::error::{Error, Result};
use crate::numerics::{ridge_solve_with, Matrix};

/// How influence points are placed along the x-axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfluenceAxis {
    /// Fixed percentile cut-offs in `[0, 50)`.
    Percentiles(Vec<f64>),
    /// Target percentages of training samples left; the cut-off is searched
    /// separately for every run and mode so both modes remove the same amount.
    Remaining(Vec<f64>),
}

impl InfluenceAxis {
    fn points(&self) -> &[f64] {
        match self {
            InfluenceAxis::Percentiles(v) | InfluenceAxis::Remaining(v) => v,
        }
    }
}

/// Single-learner study of how removing outliers or inliers hurts test MSE.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceSpec {
    pub dataset: String,
    pub source: DataSource,
    #[serde(flatten)]
    pub preprocess: Preprocess,
    #[serde(default)]
    pub lambda: f64,
    pub axis: InfluenceAxis,
    #[serde(default = "default_runs")]
    pub runs: usize,
    pub seed: u64,
    #[serde(default = "default_modes")]
    pub modes: Vec<RemovalMode>,
}

fn default_modes() -> Vec<RemovalMode> {
    vec![RemovalMode::Outliers, RemovalMode::Inliers]
}

impl InfluenceSpec {
    pub fn validate(&self) -> Result<()> {
        validate_preprocess(&self.preprocess, self.runs)?;
        if self.axis.points().is_empty() || self.modes.is_empty() {
            return Err(Error::InvalidSpec("influence study has no points".into()));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidSpec(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        match &self.axis {
            InfluenceAxis::Percentiles(ps) => {
                if let Some(p) = ps.iter().find(|p| !(0.0..50.0).contains(*p)) {
                    return Err(Error::InvalidSpec(format!("percentile {p} outside [0, 50)")));
                }
            }
            InfluenceAxis::Remaining(ts) => {
                if let Some(t) = ts.iter().find(|t| !(**t > 0.0 && **t <= 100.0)) {
                    return Err(Error::InvalidSpec(format!("remaining percentage {t} outside (0, 100]")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfluenceRecord {
    pub dataset: String,
    pub mode: RemovalMode,
    /// Percentile cut-off, averaged over runs when it was searched for.
    pub percentile: f64,
    pub remaining_pct: f64,
    pub test_mse_mean: f64,
    pub test_mse_std: f64,
    pub runs: usize,
    /// Requested remaining percentage, for the `remaining` axis.
    pub target_remaining_pct: Option<f64>,
    pub error: Option<String>,
    #[serde(skip)]
    pub test_mse_runs: Vec<f64>,
}

/// Smallest-error cut-off `p` whose filter keeps closest to `target`
/// (a fraction) of the rows of `x`. Kept counts are nonincreasing in `p`.
pub fn percentile_for_remaining(sorted: &SortedColumns, x: &Matrix, mode: RemovalMode, target: f64) -> Result<f64> {
    let n = x.rows() as f64;
    let goal = target * n;
    let kept = |p: f64| -> Result<f64> { Ok(sorted.mask(x, p, mode)?.iter().filter(|&&k| k).count() as f64) };
    if goal >= n {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 50.0 * (1.0 - f64::EPSILON));
    if kept(hi)? >= goal {
        return Ok(hi);
    }
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if kept(mid)? >= goal {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if (kept(lo)? - goal).abs() <= (kept(hi)? - goal).abs() { lo } else { hi })
}

struct Point {
    percentile: f64,
    remaining_pct: f64,
    test_mse: f64,
}

type Outcome = std::result::Result<Point, String>;

fn evaluate(data: &RunData, spec: &InfluenceSpec) -> Result<Vec<Vec<Outcome>>> {
    let x = data.train.features();
    let sorted = SortedColumns::new(x);
    let mapped = data.feature_map.apply(x)?;
    let mapped_test = data.feature_map.apply(data.test.features())?;
    let n = x.rows();
    let unpenalized = data.feature_map.unpenalized(x.cols());

    let point = |mode: RemovalMode, v: f64| -> Result<Point> {
        let p = match spec.axis {
            InfluenceAxis::Percentiles(_) => v,
            InfluenceAxis::Remaining(_) => percentile_for_remaining(&sorted, x, mode, v / 100.0)?,
        };
        let keep = sorted.mask(x, p, mode)?;
        let rows: Vec<usize> = keep.iter().enumerate().filter_map(|(i, &k)| k.then_some(i)).collect();
        if rows.is_empty() {
            return Err(Error::EmptyResult);
        }
        let y: Vec<f64> = rows.iter().map(|&i| data.train.response()[i]).collect();
        let w = ridge_solve_with(&mapped.select_rows(&rows), &y, spec.lambda, &unpenalized)?;
        let pred = mapped_test.mat_vec(&w)?;
        let test_mse = pred
            .iter()
            .zip(data.test.response().iter())
            .map(|(p, t)| (p - t).powi(2))
            .sum::<f64>()
            / pred.len() as f64;
        Ok(Point {
            percentile: p,
            remaining_pct: 100.0 * rows.len() as f64 / n as f64,
            test_mse,
        })
    };

    Ok(spec
        .modes
        .iter()
        .map(|&mode| {
            spec.axis
                .points()
                .iter()
                .map(|&v| point(mode, v).map_err(|e| e.to_string()))
                .collect()
        })
        .collect())
}

/// For every mode and axis point, the test MSE of one learner trained on the
/// filtered training set, averaged over `runs` splits. Percentile bands are
/// computed on the normalized original features of each run's train split.
pub fn run_influence(spec: &InfluenceSpec) -> Result<Vec<InfluenceRecord>> {
    spec.validate()?;
    let full = spec.source.load()?;
    let per_run: Vec<Vec<Vec<Outcome>>> = (0..spec.runs)
        .into_par_iter()
        .map(|run| {
            let data = prepare_run(&full, &spec.preprocess, spec.seed, run)?;
            evaluate(&data, spec)
        })
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    for (m, &mode) in spec.modes.iter().enumerate() {
        for (k, &v) in spec.axis.points().iter().enumerate() {
            let mut record = InfluenceRecord {
                dataset: spec.dataset.clone(),
                mode,
                percentile: f64::NAN,
                remaining_pct: f64::NAN,
                test_mse_mean: f64::NAN,
                test_mse_std: f64::NAN,
                runs: spec.runs,
                target_remaining_pct: matches!(spec.axis, InfluenceAxis::Remaining(_)).then_some(v),
                error: None,
                test_mse_runs: Vec::new(),
            };
            let points: std::result::Result<Vec<&Point>, String> =
                per_run.iter().map(|run| run[m][k].as_ref().map_err(Clone::clone)).collect();
            match points {
                Ok(points) => {
                    let runs = points.len() as f64;
                    record.percentile = points.iter().map(|p| p.percentile).sum::<f64>() / runs;
                    record.remaining_pct = points.iter().map(|p| p.remaining_pct).sum::<f64>() / runs;
                    record.test_mse_runs = points.iter().map(|p| p.test_mse).collect();
                    (record.test_mse_mean, record.test_mse_std) = mean_std(&record.test_mse_runs);
                }
                Err(e) => record.error = Some(e),
            }
            records.push(record);
        }
    }
    Ok(records)
}
