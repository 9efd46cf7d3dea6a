use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RemovalMode {
    /// Drop samples with any feature outside the `[p, 100 − p]` band.
    Outliers,
    /// Drop samples with every feature inside the central `[50 − p, 50 + p]` band.
    Inliers,
}

impl RemovalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RemovalMode::Outliers => "outliers",
            RemovalMode::Inliers => "inliers",
        }
    }
}

/// Percentile of already-sorted data, linear interpolation between closest ranks.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty data");
    let h = (sorted.len() - 1) as f64 * (p / 100.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Per-column sorted copies of a feature matrix, so that many percentile
/// cuts of the same data cost one sort.
#[derive(Clone, Debug)]
pub struct SortedColumns {
    columns: Vec<Vec<f64>>,
}

impl SortedColumns {
    pub fn new(x: &Matrix) -> Self {
        let columns = (0..x.cols())
            .map(|j| {
                let mut col = x.column(j).into_vec();
                col.sort_by(f64::total_cmp);
                col
            })
            .collect();
        SortedColumns { columns }
    }

    /// Keep-mask for the rows of `x`, which must be the matrix these columns came from.
    pub fn mask(&self, x: &Matrix, p: f64, mode: RemovalMode) -> Result<Vec<bool>> {
        if !(0.0..50.0).contains(&p) {
            return Err(Error::InvalidSpec(format!("percentile {p} outside [0, 50)")));
        }
        let n = x.rows();
        if n == 0 {
            return Err(Error::EmptyResult);
        }
        if p == 0.0 {
            return Ok(vec![true; n]);
        }
        let (lo_p, hi_p) = match mode {
            RemovalMode::Outliers => (p, 100.0 - p),
            RemovalMode::Inliers => (50.0 - p, 50.0 + p),
        };
        let mut inside = vec![true; n];
        for (j, col) in self.columns.iter().enumerate() {
            let lo = percentile(col, lo_p);
            let hi = percentile(col, hi_p);
            for (i, flag) in inside.iter_mut().enumerate() {
                let v = x.get(i, j);
                *flag &= v >= lo && v <= hi;
            }
        }
        Ok(match mode {
            RemovalMode::Outliers => inside,
            RemovalMode::Inliers => inside.into_iter().map(|b| !b).collect(),
        })
    }
}

/// Keep-mask for `remove_by_percentile`; `true` means the sample survives.
pub fn removal_mask(ds: &Dataset, p: f64, mode: RemovalMode) -> Result<Vec<bool>> {
    if !(0.0..50.0).contains(&p) {
        return Err(Error::InvalidSpec(format!("percentile {p} outside [0, 50)")));
    }
    SortedColumns::new(ds.features()).mask(ds.features(), p, mode)
}

/// Drops outliers or inliers by per-column percentile bands computed on `ds`.
pub fn remove_by_percentile(ds: &Dataset, p: f64, mode: RemovalMode) -> Result<Dataset> {
    let keep = removal_mask(ds, p, mode)?;
    if !keep.iter().any(|&k| k) {
        return Err(Error::EmptyResult);
    }
    Ok(ds.filter(&keep))
}
