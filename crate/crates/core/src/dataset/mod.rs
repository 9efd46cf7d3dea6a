//! Datasets: CSV ingestion, min-max normalization, seeded splits, synthetic
//! generators and percentile-based outlier/inlier filtering.

mod csv_io;
mod normalize;
mod percentile;
mod synthetic;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

pub use csv_io::{load_csv, write_csv, ColumnSelector};
pub(crate) use csv_io::read_csv as csv_io_read;
pub use normalize::{normalize, NormalizationRecord};
pub use percentile::{percentile, remove_by_percentile, removal_mask, RemovalMode, SortedColumns};
pub use synthetic::{expand_polynomial, gen_synthetic, SyntheticKind, SyntheticSpec};

/// Stable per-sample identifier, assigned at load/generation time.
pub type SampleId = usize;

/// Feature matrix plus response with a stable id per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Matrix,
    response: Vector,
    ids: Vec<SampleId>,
    feature_names: Vec<String>,
    response_name: String,
}

impl Dataset {
    /// Builds a dataset with ids `0..n` and default column names.
    pub fn new(features: Matrix, response: Vector) -> Result<Self> {
        let ids = (0..features.rows()).collect();
        Self::with_ids(features, response, ids)
    }

    pub fn with_ids(features: Matrix, response: Vector, ids: Vec<SampleId>) -> Result<Self> {
        let feature_names = (0..features.cols()).map(|j| format!("x{j}")).collect();
        Self::from_parts(features, response, ids, feature_names, "y".to_string())
    }

    pub fn from_parts(
        features: Matrix,
        response: Vector,
        ids: Vec<SampleId>,
        feature_names: Vec<String>,
        response_name: String,
    ) -> Result<Self> {
        if features.rows() != response.len() || features.rows() != ids.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows, {} responses, {} ids",
                features.rows(),
                response.len(),
                ids.len()
            )));
        }
        if feature_names.len() != features.cols() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.cols()
            )));
        }
        let mut sorted = ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSpec("duplicate sample ids".into()));
        }
        Ok(Dataset {
            features,
            response,
            ids,
            feature_names,
            response_name,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn response(&self) -> &Vector {
        &self.response
    }

    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn response_name(&self) -> &str {
        &self.response_name
    }

    /// Row position of `id`, if present.
    pub fn position(&self, id: SampleId) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    /// Rows at the given positions, in that order, ids preserved.
    pub fn select(&self, positions: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(positions),
            response: self.response.select(positions),
            ids: positions.iter().map(|&p| self.ids[p]).collect(),
            feature_names: self.feature_names.clone(),
            response_name: self.response_name.clone(),
        }
    }

    /// Keeps the rows whose mask entry is `true`.
    pub fn filter(&self, keep: &[bool]) -> Dataset {
        let positions: Vec<usize> = keep
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| k.then_some(i))
            .collect();
        self.select(&positions)
    }

    /// Same ids with new values. Feature names survive only if the width does.
    pub(crate) fn replace_values(&self, features: Matrix, response: Vector) -> Result<Dataset> {
        let names = if features.cols() == self.n_features() {
            self.feature_names.clone()
        } else {
            (0..features.cols()).map(|j| format!("f{j}")).collect()
        };
        Dataset::from_parts(
            features,
            response,
            self.ids.clone(),
            names,
            self.response_name.clone(),
        )
    }
}

/// Shuffles under `seed` and returns `(train, test)` with `n_train` rows in train.
pub fn split(ds: &Dataset, n_train: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    if n_train == 0 || n_train >= ds.len() {
        return Err(Error::BadSplitSize {
            n_train,
            n: ds.len(),
        });
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((ds.select(&order[..n_train]), ds.select(&order[n_train..])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn toy(n: usize) -> Dataset {
        let x = Matrix::new(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let y = Vector::new((0..n).map(|i| 2.0 * i as f64).collect()).unwrap();
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = toy(10);
        let (a, b) = split(&ds, 7, 42).unwrap();
        assert_eq!((a.len(), b.len()), (7, 3));
        let (c, d) = split(&ds, 7, 42).unwrap();
        assert_eq!(a, c);
        assert_eq!(b, d);
    }

    #[test]
    fn split_partitions_ids() {
        let ds = toy(25);
        let (a, b) = split(&ds, 11, 3).unwrap();
        let left: BTreeSet<_> = a.ids().iter().copied().collect();
        let right: BTreeSet<_> = b.ids().iter().copied().collect();
        assert!(left.is_disjoint(&right));
        let union: BTreeSet<_> = left.union(&right).copied().collect();
        assert_eq!(union, ds.ids().iter().copied().collect());
        // rows travel with their ids
        for (row, &id) in a.ids().iter().enumerate() {
            assert_eq!(a.features().get(row, 0), id as f64);
        }
    }

    #[test]
    fn bad_split_sizes() {
        let ds = toy(5);
        assert!(matches!(split(&ds, 0, 1), Err(Error::BadSplitSize { .. })));
        assert!(matches!(split(&ds, 5, 1), Err(Error::BadSplitSize { .. })));
    }

    #[test]
    fn rejects_inconsistent_parts() {
        let x = Matrix::zeros(2, 1);
        assert!(Dataset::new(x.clone(), Vector::zeros(3)).is_err());
        assert!(Dataset::with_ids(x, Vector::zeros(2), vec![1, 1]).is_err());
    }
}
