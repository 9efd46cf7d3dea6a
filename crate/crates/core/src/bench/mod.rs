//! Experiment harness: shard-count sweeps (performance vs unlearning cost) and
//! influence-removal studies, with deterministic per-run seeding.

mod emit;
mod influence;
mod tradeoff;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::{gen_synthetic, load_csv, normalize, split, ColumnSelector, Dataset, SyntheticSpec};
use crate::error::{Error, Result};
use crate::projections::{FeatureMap, ProjectionMap};

pub use emit::{emit_results, format_float, write_results, OutputFormat, ResultRecord};
pub use influence::{percentile_for_remaining, run_influence, InfluenceAxis, InfluenceRecord, InfluenceSpec};
pub use tradeoff::{run_tradeoff, Cell, SweepSpec, TradeoffRecord};

/// Where a benchmark gets its samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Csv { path: PathBuf, response: ColumnSelector },
    Synthetic(SyntheticSpec),
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Csv { path, response } => load_csv(path, response),
            DataSource::Synthetic(spec) => gen_synthetic(spec),
        }
    }
}

/// Preprocessing shared by every experiment run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    pub n_train: usize,
    /// Random-projection dimension; `None` trains on the normalized features.
    #[serde(default)]
    pub projection_dim: Option<usize>,
    /// Append a constant column so learners fit an intercept.
    #[serde(default = "default_true")]
    pub intercept: bool,
}

pub(crate) fn default_true() -> bool {
    true
}

pub(crate) fn default_runs() -> usize {
    20
}

/// One shuffled, split and normalized copy of the data.
#[derive(Clone, Debug)]
pub(crate) struct RunData {
    pub train: Dataset,
    pub test: Dataset,
    pub feature_map: FeatureMap,
}

/// Labels for the independent seed streams derived from a master seed.
pub mod stream {
    pub const SPLIT: u64 = 1;
    pub const PROJECTION: u64 = 2;
    pub const CODE: u64 = 3;
    pub const PICK: u64 = 4;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent seed for a labelled sub-stream of `master`.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(master), |h, &p| splitmix64(h ^ splitmix64(p)))
}

/// Shuffle/split, min-max normalization fitted on the train part and, when
/// asked for, a fresh random projection. Depends only on `(seed, run)`, so
/// every sweep cell of a run sees the same data.
pub(crate) fn prepare_run(full: &Dataset, pre: &Preprocess, seed: u64, run: usize) -> Result<RunData> {
    let (train, test) = split(full, pre.n_train, derive_seed(seed, &[stream::SPLIT, run as u64]))?;
    let (train, test, _) = normalize(&train, &test)?;
    let projection = pre
        .projection_dim
        .map(|dim| ProjectionMap::new(train.n_features(), dim, derive_seed(seed, &[stream::PROJECTION, run as u64])))
        .transpose()?;
    Ok(RunData {
        train,
        test,
        feature_map: FeatureMap {
            projection,
            intercept: pre.intercept,
        },
    })
}

pub(crate) fn validate_preprocess(pre: &Preprocess, runs: usize) -> Result<()> {
    if runs == 0 {
        return Err(Error::InvalidSpec("runs must be at least 1".into()));
    }
    if pre.n_train == 0 {
        return Err(Error::InvalidSpec("n_train must be positive".into()));
    }
    if pre.projection_dim == Some(0) {
        return Err(Error::InvalidSpec("projection dimension must be positive".into()));
    }
    Ok(())
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_by_label() {
        let a = derive_seed(7, &[stream::SPLIT, 0]);
        assert_ne!(a, derive_seed(7, &[stream::SPLIT, 1]));
        assert_ne!(a, derive_seed(7, &[stream::PROJECTION, 0]));
        assert_ne!(a, derive_seed(8, &[stream::SPLIT, 0]));
        assert_eq!(a, derive_seed(7, &[stream::SPLIT, 0]));
    }

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
    }
}
