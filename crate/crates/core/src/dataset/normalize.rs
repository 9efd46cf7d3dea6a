use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

/// Per-column min/max captured on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRecord {
    pub feature_min: Vec<f64>,
    pub feature_max: Vec<f64>,
    pub response_min: f64,
    pub response_max: f64,
}

fn to_unit(v: f64, min: f64, max: f64) -> f64 {
    if max > min {
        (v - min) / (max - min)
    } else {
        0.0
    }
}

fn from_unit(v: f64, min: f64, max: f64) -> f64 {
    if max > min {
        v * (max - min) + min
    } else {
        min
    }
}

impl NormalizationRecord {
    /// Captures column ranges of `ds`. Fails on an empty dataset.
    pub fn fit(ds: &Dataset) -> Result<Self> {
        if ds.is_empty() {
            return Err(Error::InvalidSpec("cannot normalize an empty dataset".into()));
        }
        let d = ds.n_features();
        let mut feature_min = vec![f64::INFINITY; d];
        let mut feature_max = vec![f64::NEG_INFINITY; d];
        for row in ds.features().iter_rows() {
            for (j, &v) in row.iter().enumerate() {
                feature_min[j] = feature_min[j].min(v);
                feature_max[j] = feature_max[j].max(v);
            }
        }
        let ys = ds.response();
        Ok(NormalizationRecord {
            feature_min,
            feature_max,
            response_min: ys.iter().cloned().fold(f64::INFINITY, f64::min),
            response_max: ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        })
    }

    pub fn apply_features(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x.cols())?;
        let mut data = Vec::with_capacity(x.rows() * x.cols());
        for row in x.iter_rows() {
            data.extend(
                row.iter()
                    .enumerate()
                    .map(|(j, &v)| to_unit(v, self.feature_min[j], self.feature_max[j])),
            );
        }
        Matrix::new(x.rows(), x.cols(), data)
    }

    pub fn invert_features(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x.cols())?;
        let mut data = Vec::with_capacity(x.rows() * x.cols());
        for row in x.iter_rows() {
            data.extend(
                row.iter()
                    .enumerate()
                    .map(|(j, &v)| from_unit(v, self.feature_min[j], self.feature_max[j])),
            );
        }
        Matrix::new(x.rows(), x.cols(), data)
    }

    pub fn apply_response(&self, y: &[f64]) -> Result<Vector> {
        Vector::new(
            y.iter()
                .map(|&v| to_unit(v, self.response_min, self.response_max))
                .collect(),
        )
    }

    pub fn invert_response(&self, y: &[f64]) -> Result<Vector> {
        Vector::new(
            y.iter()
                .map(|&v| from_unit(v, self.response_min, self.response_max))
                .collect(),
        )
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        ds.replace_values(
            self.apply_features(ds.features())?,
            self.apply_response(ds.response())?,
        )
    }

    fn check_width(&self, cols: usize) -> Result<()> {
        if cols != self.feature_min.len() {
            return Err(Error::DimensionMismatch(format!(
                "normalization fitted on {} features, got {cols}",
                self.feature_min.len()
            )));
        }
        Ok(())
    }
}

/// Min-max scales `train` to [0, 1] per column and applies the same maps to `test`.
pub fn normalize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, NormalizationRecord)> {
    let record = NormalizationRecord::fit(train)?;
    Ok((record.apply(train)?, record.apply(test)?, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn column(values: &[f64]) -> Dataset {
        let n = values.len();
        Dataset::new(
            Matrix::new(n, 1, values.to_vec()).unwrap(),
            Vector::new(values.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn maps_train_to_unit_interval() {
        let (train, _, _) = normalize(&column(&[2.0, 4.0, 6.0]), &column(&[8.0])).unwrap();
        assert_eq!(train.features().as_slice(), &[0.0, 0.5, 1.0]);
        assert_eq!(train.response().as_slice(), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let (train, _, rec) = normalize(&column(&[5.0, 5.0, 5.0]), &column(&[1.0])).unwrap();
        assert_eq!(train.features().as_slice(), &[0.0, 0.0, 0.0]);
        assert!(rec.feature_max[0] >= rec.feature_min[0]);
    }

    #[test]
    fn test_uses_train_range() {
        let (_, test, _) = normalize(&column(&[2.0, 4.0, 6.0]), &column(&[8.0])).unwrap();
        assert_eq!(test.features().as_slice(), &[1.5]);
    }

    proptest! {
        #[test]
        fn denormalize_reconstructs(values in prop::collection::vec(-10.0f64..10.0, 1..40)) {
            let ds = column(&values);
            let (train, _, rec) = normalize(&ds, &ds).unwrap();
            let back = rec.invert_features(train.features()).unwrap();
            for (a, b) in back.as_slice().iter().zip(&values) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let yback = rec.invert_response(train.response()).unwrap();
            for (a, b) in yback.iter().zip(&values) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
