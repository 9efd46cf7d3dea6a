use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::learn::train_learners;
use super::model::EnsembleModel;
use crate::coding::{CodedShard, CodedStore};
use crate::dataset::{Dataset, SampleId};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, Vector};

/// Samples to forget together with their raw (unmapped) rows.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlearnRequest {
    ids: Vec<SampleId>,
    features: Matrix,
    response: Vector,
}

impl UnlearnRequest {
    pub fn new(ids: Vec<SampleId>, features: Matrix, response: Vector) -> Result<Self> {
        if features.rows() != ids.len() || response.len() != ids.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} ids, {} feature rows, {} responses",
                ids.len(),
                features.rows(),
                response.len()
            )));
        }
        Ok(UnlearnRequest {
            ids,
            features,
            response,
        })
    }

    /// Pulls the raw rows for `ids` out of the retained training set.
    pub fn from_dataset(train: &Dataset, ids: &[SampleId]) -> Result<Self> {
        let positions = ids
            .iter()
            .map(|&id| train.position(id).ok_or(Error::UnknownSample(id)))
            .collect::<Result<Vec<_>>>()?;
        let rows = train.select(&positions);
        UnlearnRequest::new(ids.to_vec(), rows.features().clone(), rows.response().clone())
    }

    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn response(&self) -> &Vector {
        &self.response
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlearnOptions {
    /// Retrain affected learners on the rayon pool.
    pub parallel: bool,
}

/// What an unlearning batch touched.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffectedReport {
    pub ids: Vec<SampleId>,
    /// Unique retrained learners, ascending.
    pub affected: Vec<usize>,
    /// Retrain wall time per entry of `affected`, seconds.
    pub retrain_seconds: Vec<f64>,
    /// For each request id, how many coded shards it was removed from.
    pub touched_per_sample: Vec<usize>,
}

impl AffectedReport {
    pub fn total_retrain_seconds(&self) -> f64 {
        self.retrain_seconds.iter().sum()
    }
}

/// Removes the requested samples from every coded shard they were summed into
/// and retrains only those learners from scratch.
///
/// The batch is all-or-nothing: on any error the model and store are left as
/// they were.
pub fn unlearn(
    model: &mut EnsembleModel,
    store: &mut CodedStore,
    request: &UnlearnRequest,
    options: UnlearnOptions,
) -> Result<AffectedReport> {
    let mut seen = BTreeSet::new();
    let mut locations = Vec::with_capacity(request.len());
    for &id in request.ids() {
        let loc = store.location(id).ok_or(Error::UnknownSample(id))?;
        if store.is_unlearned(id) || !seen.insert(id) {
            return Err(Error::AlreadyUnlearned(id));
        }
        locations.push(loc);
    }

    let g = store.generator().clone();
    let mut updated: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut touched_per_sample = Vec::with_capacity(request.len());
    let width = store.width();
    for (k, loc) in locations.iter().enumerate() {
        let x = model.feature_map().apply_row(request.features().row(k))?;
        if x.len() != width {
            return Err(Error::DimensionMismatch(format!(
                "mapped request row has {} features, shards have {width}",
                x.len()
            )));
        }
        let y = request.response()[k];
        let support = g.row_support(loc.shard);
        for &j in &support {
            let (sx, sy) = updated.entry(j).or_insert_with(|| {
                let sh = store.shard(j);
                (sh.features.as_slice().to_vec(), sh.response.as_slice().to_vec())
            });
            let coeff = f64::from(g.get(loc.shard, j));
            for (dst, &v) in sx[loc.row * width..(loc.row + 1) * width].iter_mut().zip(&x) {
                *dst -= coeff * v;
            }
            sy[loc.row] -= coeff * y;
        }
        touched_per_sample.push(support.len());
    }

    let n_bar = store.shard_size();
    let new_shards = updated
        .into_iter()
        .map(|(j, (x, y))| {
            Ok((
                j,
                CodedShard {
                    features: Matrix::new(n_bar, width, x)?,
                    response: Vector::new(y)?,
                },
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let refs: Vec<&CodedShard> = new_shards.iter().map(|(_, sh)| sh).collect();
    let fitted = train_learners(&refs, model.lambda(), &model.unpenalized(), options.parallel)?;

    let mut affected = Vec::with_capacity(new_shards.len());
    let mut retrain_seconds = Vec::with_capacity(new_shards.len());
    for ((j, shard), (w, secs)) in new_shards.into_iter().zip(fitted) {
        store.replace_shard(j, shard);
        model.set_learner(j, &w);
        affected.push(j);
        retrain_seconds.push(secs);
    }
    model.refresh_agg();
    for &id in request.ids() {
        store.mark_unlearned(id);
    }
    Ok(AffectedReport {
        ids: request.ids().to_vec(),
        affected,
        retrain_seconds,
        touched_per_sample,
    })
}
