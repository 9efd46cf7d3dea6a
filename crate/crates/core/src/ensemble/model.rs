use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};
use crate::projections::FeatureMap;

/// Weak-learner weights (one column per coded shard) and their mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    weights: Matrix,
    agg: Vector,
    lambda: f64,
    feature_map: FeatureMap,
    input_dim: usize,
}

/// Column mean of `weights`, summing learners in index order.
pub(crate) fn aggregate(weights: &Matrix) -> Vector {
    let r = weights.cols() as f64;
    Vector::new(weights.iter_rows().map(|row| row.iter().sum::<f64>() / r).collect())
        .expect("mean of finite weights is finite")
}

impl EnsembleModel {
    pub fn new(weights: Matrix, lambda: f64, feature_map: FeatureMap, input_dim: usize) -> Result<Self> {
        let width = feature_map.output_dim(input_dim);
        if weights.rows() != width || weights.cols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "weights are {}x{}, feature map produces {width} columns",
                weights.rows(),
                weights.cols()
            )));
        }
        if let Some(p) = &feature_map.projection {
            if p.input_dim() != input_dim {
                return Err(Error::DimensionMismatch(format!(
                    "projection expects {} inputs, model declares {input_dim}",
                    p.input_dim()
                )));
            }
        }
        let agg = aggregate(&weights);
        Ok(EnsembleModel {
            weights,
            agg,
            lambda,
            feature_map,
            input_dim,
        })
    }

    /// `D' × r` weight matrix `W*`.
    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn learner_weights(&self, j: usize) -> Vector {
        self.weights.column(j)
    }

    pub fn agg(&self) -> &Vector {
        &self.agg
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.feature_map
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Weight indices exempt from the ridge penalty.
    pub fn unpenalized(&self) -> Vec<usize> {
        self.feature_map.unpenalized(self.input_dim)
    }

    pub fn n_learners(&self) -> usize {
        self.weights.cols()
    }

    pub(crate) fn set_learner(&mut self, j: usize, w: &[f64]) {
        let mut data = self.weights.as_slice().to_vec();
        let r = self.weights.cols();
        for (k, &v) in w.iter().enumerate() {
            data[k * r + j] = v;
        }
        self.weights = Matrix::new(self.weights.rows(), r, data).expect("finite weights");
    }

    pub(crate) fn refresh_agg(&mut self) {
        self.agg = aggregate(&self.weights);
    }

    /// `φ(X)·w_agg`, with the feature map applied to raw inputs.
    pub fn predict(&self, x_raw: &Matrix) -> Result<Vector> {
        self.check_input(x_raw)?;
        let mapped = self.feature_map.apply(x_raw)?;
        mapped.mat_vec(&self.agg)
    }

    /// `n × r` matrix of the individual weak predictions.
    pub fn predict_per_learner(&self, x_raw: &Matrix) -> Result<Matrix> {
        self.check_input(x_raw)?;
        self.feature_map.apply(x_raw)?.matmul(&self.weights)
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "model expects {} features, got {}",
                self.input_dim,
                x.cols()
            )));
        }
        Ok(())
    }

    /// Mean squared error of `predict` against `y`.
    pub fn mse(&self, x_raw: &Matrix, y: &[f64]) -> Result<f64> {
        let pred = self.predict(x_raw)?;
        if pred.len() != y.len() {
            return Err(Error::DimensionMismatch("prediction/response length".into()));
        }
        if y.is_empty() {
            return Ok(0.0);
        }
        Ok(pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64)
    }

    /// Weight matrix as CSV: one row per feature, columns `w0..w{r-1}`.
    pub fn write_weights_csv<W: Write>(&self, writer: W) -> Result<()> {
        let err = |e: csv::Error| Error::Serde(e.to_string());
        let mut wtr = csv::Writer::from_writer(writer);
        let header: Vec<String> = (0..self.weights.cols()).map(|j| format!("w{j}")).collect();
        wtr.write_record(&header).map_err(err)?;
        for row in self.weights.iter_rows() {
            wtr.write_record(row.iter().map(f64::to_string)).map_err(err)?;
        }
        wtr.flush().map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn read_weights_csv<R: Read>(reader: R) -> Result<Matrix> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Serde(e.to_string()))?;
            let row = rec
                .iter()
                .map(|c| c.parse::<f64>().map_err(|e| Error::Serde(format!("weight `{c}`: {e}"))))
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Matrix::from_rows(&rows)
    }
}
