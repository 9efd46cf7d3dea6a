//! Random cosine projections approximating kernel regression.
//!
//! Each output feature is `cos(xᵀθᵢ + bᵢ)` with `θᵢ ~ N(0, I/(2d))` and
//! `bᵢ ~ unif(−π, π)`. No `1/√D` scaling is applied; the regression weights
//! absorb it. Maps are data-independent, so they never change on unlearning.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Cosine,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionMap {
    input_dim: usize,
    output_dim: usize,
    /// `input_dim × output_dim`; column `i` is θᵢ.
    thetas: Matrix,
    biases: Vector,
    activation: Activation,
    seed: u64,
}

const MAGIC: &[u8; 8] = b"CUPROJ01";

impl ProjectionMap {
    /// Samples a map from `d` input features to `dim` projected features.
    pub fn new(d: usize, dim: usize, seed: u64) -> Result<Self> {
        if d == 0 || dim == 0 {
            return Err(Error::InvalidSpec(format!(
                "projection dimensions must be positive (d = {d}, D = {dim})"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, (1.0 / (2.0 * d as f64)).sqrt())
            .map_err(|e| Error::InvalidSpec(e.to_string()))?;
        let thetas: Vec<f64> = (0..d * dim).map(|_| normal.sample(&mut rng)).collect();
        let biases: Vec<f64> = (0..dim)
            .map(|_| loop {
                let b = rng.random_range(-PI..PI);
                if b > -PI {
                    break b;
                }
            })
            .collect();
        Ok(ProjectionMap {
            input_dim: d,
            output_dim: dim,
            thetas: Matrix::new(d, dim, thetas)?,
            biases: Vector::new(biases)?,
            activation: Activation::Cosine,
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn thetas(&self) -> &Matrix {
        &self.thetas
    }

    pub fn biases(&self) -> &Vector {
        &self.biases
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Projects one row into `out`.
    fn project_row_into(&self, row: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (j, &xj) in row.iter().enumerate() {
            for (acc, &t) in out.iter_mut().zip(self.thetas.row(j)) {
                *acc += xj * t;
            }
        }
        for (acc, &b) in out.iter_mut().zip(self.biases.iter()) {
            *acc = (*acc + b).cos();
        }
    }

    pub fn project_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        self.check_width(row.len())?;
        let mut out = vec![0.0; self.output_dim];
        self.project_row_into(row, &mut out);
        Ok(out)
    }

    /// `n × D` matrix of `cos(xₖᵀθᵢ + bᵢ)`.
    pub fn project(&self, x: &Matrix) -> Result<Matrix> {
        self.check_width(x.cols())?;
        let mut data = vec![0.0; x.rows() * self.output_dim];
        for (row, out) in x.iter_rows().zip(data.chunks_mut(self.output_dim)) {
            self.project_row_into(row, out);
        }
        Matrix::new(x.rows(), self.output_dim, data)
    }

    fn check_width(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "projection expects {} features, got {cols}",
                self.input_dim
            )));
        }
        Ok(())
    }

    /// Little-endian binary form: magic, seed, d, D, thetas (row-major), biases.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * (self.thetas.as_slice().len() + self.output_dim));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(self.input_dim as u64).to_le_bytes());
        out.extend_from_slice(&(self.output_dim as u64).to_le_bytes());
        for v in self.thetas.as_slice().iter().chain(self.biases.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Serde(format!("projection map: {m}"));
        if bytes.len() < 32 || &bytes[..8] != MAGIC {
            return Err(bad("bad header"));
        }
        let word = |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
        let seed = word(1);
        let d = word(2) as usize;
        let dim = word(3) as usize;
        let count = d
            .checked_mul(dim)
            .and_then(|c| c.checked_add(dim))
            .ok_or_else(|| bad("size overflow"))?;
        if bytes.len() != 32 + 8 * count {
            return Err(bad("truncated payload"));
        }
        let values: Vec<f64> = bytes[32..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let (thetas, biases) = values.split_at(d * dim);
        Ok(ProjectionMap {
            input_dim: d,
            output_dim: dim,
            thetas: Matrix::new(d, dim, thetas.to_vec())?,
            biases: Vector::new(biases.to_vec())?,
            activation: Activation::Cosine,
            seed,
        })
    }
}

/// Convenience alias matching the free-function style of the other modules.
pub fn make_projection(d: usize, dim: usize, seed: u64) -> Result<ProjectionMap> {
    ProjectionMap::new(d, dim, seed)
}

pub fn project(map: &ProjectionMap, x: &Matrix) -> Result<Matrix> {
    map.project(x)
}

/// Data-independent feature map applied before encoding: an optional random
/// projection followed by an optional constant column.
///
/// The constant column acts as an intercept. After encoding it holds the
/// number of samples summed into each coded row, which is what a per-sample
/// intercept contributes to a summed response.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub projection: Option<ProjectionMap>,
    pub intercept: bool,
}

impl FeatureMap {
    pub fn identity() -> Self {
        FeatureMap::default()
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        self.projection.as_ref().map_or(input_dim, |p| p.output_dim()) + usize::from(self.intercept)
    }

    /// Output columns left out of the ridge penalty: the intercept, if any.
    pub fn unpenalized(&self, input_dim: usize) -> Vec<usize> {
        if self.intercept {
            vec![self.output_dim(input_dim) - 1]
        } else {
            Vec::new()
        }
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix> {
        let base = match &self.projection {
            Some(p) => p.project(x)?,
            None => x.clone(),
        };
        if self.intercept {
            base.hstack(&Matrix::new(base.rows(), 1, vec![1.0; base.rows()])?)
        } else {
            Ok(base)
        }
    }

    pub fn apply_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        let mut out = match &self.projection {
            Some(p) => p.project_row(row)?,
            None => row.to_vec(),
        };
        if self.intercept {
            out.push(1.0);
        }
        Ok(out)
    }
}
