use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::EnsembleModel;
use crate::coding::{encode, rand_matrix, rand_matrix_minimal, CodedShard, CodedStore, GeneratorMatrix};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::{ridge_solve_with, Matrix, Vector};
use crate::projections::FeatureMap;

/// How the generator matrix is drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum DensityMode {
    /// One nonzero per row (ρ = 1/r): each sample lands in exactly one coded shard.
    Minimal,
    /// i.i.d. Bernoulli(ρ) entries.
    Bernoulli { rho: f64 },
}

impl DensityMode {
    pub fn label(&self) -> String {
        match self {
            DensityMode::Minimal => "minimal".to_string(),
            DensityMode::Bernoulli { rho } => format!("bernoulli:{rho}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    /// Uncoded shard count.
    pub s: usize,
    /// Coded shard count (number of weak learners).
    pub r: usize,
    pub density: DensityMode,
    pub lambda: f64,
    /// Seed for the generator matrix.
    pub seed: u64,
    /// Train weak learners on the rayon pool.
    #[serde(default)]
    pub parallel: bool,
}

/// Output of [`learn`].
#[derive(Clone, Debug)]
pub struct Learned {
    pub model: EnsembleModel,
    pub store: CodedStore,
    /// Wall time of each weak learner's solve, in seconds.
    pub learner_seconds: Vec<f64>,
    pub warnings: Vec<String>,
}

impl Learned {
    pub fn generator(&self) -> &GeneratorMatrix {
        self.store.generator()
    }

    /// Total weak-learner training time.
    pub fn learn_seconds(&self) -> f64 {
        self.learner_seconds.iter().sum()
    }
}

pub(crate) fn train_learner(shard: &CodedShard, lambda: f64, unpenalized: &[usize]) -> Result<(Vector, f64)> {
    let start = Instant::now();
    let w = ridge_solve_with(&shard.features, &shard.response, lambda, unpenalized)?;
    Ok((w, start.elapsed().as_secs_f64()))
}

pub(crate) fn train_learners(
    shards: &[&CodedShard],
    lambda: f64,
    unpenalized: &[usize],
    parallel: bool,
) -> Result<Vec<(Vector, f64)>> {
    if parallel {
        shards.par_iter().map(|sh| train_learner(sh, lambda, unpenalized)).collect()
    } else {
        shards.iter().map(|sh| train_learner(sh, lambda, unpenalized)).collect()
    }
}

pub(crate) fn weights_matrix(columns: &[Vector]) -> Result<Matrix> {
    let rows = columns.first().map_or(0, |c| c.len());
    let r = columns.len();
    let mut data = vec![0.0; rows * r];
    for (j, col) in columns.iter().enumerate() {
        for (k, &v) in col.iter().enumerate() {
            data[k * r + j] = v;
        }
    }
    Matrix::new(rows, r, data)
}

/// Encodes `train` through `feature_map` and `G`, then fits one ridge learner
/// per coded shard.
pub fn learn(train: &Dataset, config: &LearnConfig, feature_map: FeatureMap) -> Result<Learned> {
    if !(config.lambda >= 0.0 && config.lambda.is_finite()) {
        return Err(Error::InvalidSpec(format!("lambda must be >= 0, got {}", config.lambda)));
    }
    let generator = if config.s == 1 {
        if config.r != 1 {
            return Err(Error::InvalidSpec(format!("s = 1 requires r = 1, got r = {}", config.r)));
        }
        GeneratorMatrix::single()
    } else {
        match config.density {
            DensityMode::Minimal => rand_matrix_minimal(config.s, config.r, config.seed)?,
            DensityMode::Bernoulli { rho } => rand_matrix(config.s, config.r, rho, config.seed)?,
        }
    };

    let mapped = train.replace_values(feature_map.apply(train.features())?, train.response().clone())?;
    let store = encode(&mapped, &generator)?;

    let mut warnings = Vec::new();
    if store.shard_size() <= store.width() {
        warnings.push(format!(
            "shard size {} does not exceed the feature width {}; weak learners are underdetermined",
            store.shard_size(),
            store.width()
        ));
    }

    let shards: Vec<&CodedShard> = store.shards().iter().collect();
    let unpenalized = feature_map.unpenalized(train.n_features());
    let fitted = train_learners(&shards, config.lambda, &unpenalized, config.parallel)?;
    let (columns, learner_seconds): (Vec<Vector>, Vec<f64>) = fitted.into_iter().unzip();
    let model = EnsembleModel::new(
        weights_matrix(&columns)?,
        config.lambda,
        feature_map,
        train.n_features(),
    )?;
    Ok(Learned {
        model,
        store,
        learner_seconds,
        warnings,
    })
}
