use serde::{Deserialize, Serialize};

use super::learn::train_learners;
use super::model::{aggregate, EnsembleModel};
use crate::coding::{CodedShard, CodedStore};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Vector;

/// Largest relative weight discrepancy accepted as perfect unlearning.
pub const PERFECT_UNLEARNING_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// Relative discrepancy of each learner against its retrained twin.
    pub learner_discrepancy: Vec<f64>,
    pub agg_discrepancy: f64,
    pub max_discrepancy: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// `‖a − b‖∞ / ‖b‖∞`, falling back to the absolute gap when `b` is zero.
pub fn relative_discrepancy(a: &[f64], b: &[f64]) -> f64 {
    let gap = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        gap / scale
    } else {
        gap
    }
}

/// Training rows whose ids have not been unlearned from `store`.
pub fn surviving(train: &Dataset, store: &CodedStore) -> Dataset {
    let keep: Vec<bool> = train.ids().iter().map(|&id| !store.is_unlearned(id)).collect();
    train.filter(&keep)
}

/// Rebuilds every coded shard from `survivors` using the store's generator and
/// sample placement (but not its shard contents), retrains all learners from
/// scratch and compares them with `model`.
pub fn verify_perfect_unlearning(
    model: &EnsembleModel,
    store: &CodedStore,
    survivors: &Dataset,
) -> Result<VerificationReport> {
    if model.n_learners() != store.generator().r() {
        return Err(Error::DimensionMismatch(format!(
            "model has {} learners, generator has r = {}",
            model.n_learners(),
            store.generator().r()
        )));
    }
    let mapped = survivors.replace_values(
        model.feature_map().apply(survivors.features())?,
        survivors.response().clone(),
    )?;
    let shards = store.rebuild(&mapped)?;
    let refs: Vec<&CodedShard> = shards.iter().collect();
    let fitted = train_learners(&refs, model.lambda(), &model.unpenalized(), false)?;
    let columns: Vec<Vector> = fitted.into_iter().map(|(w, _)| w).collect();

    let learner_discrepancy: Vec<f64> = columns
        .iter()
        .enumerate()
        .map(|(j, w)| relative_discrepancy(model.learner_weights(j).as_slice(), w))
        .collect();
    let reference_agg = aggregate(&super::learn::weights_matrix(&columns)?);
    let agg_discrepancy = relative_discrepancy(model.agg(), &reference_agg);
    let max_discrepancy = learner_discrepancy
        .iter()
        .copied()
        .fold(agg_discrepancy, f64::max);
    Ok(VerificationReport {
        learner_discrepancy,
        agg_discrepancy,
        max_discrepancy,
        tolerance: PERFECT_UNLEARNING_TOLERANCE,
        passed: max_discrepancy <= PERFECT_UNLEARNING_TOLERANCE,
    })
}
