//! The master-node protocol: coded learning, prediction, unlearning and the
//! retrain-from-scratch check that unlearning was perfect.

mod learn;
mod model;
mod unlearn;
mod verify;

pub use learn::{learn, DensityMode, LearnConfig, Learned};
pub use model::EnsembleModel;
pub use unlearn::{unlearn, AffectedReport, UnlearnOptions, UnlearnRequest};
pub use verify::{
    relative_discrepancy, surviving, verify_perfect_unlearning, VerificationReport,
    PERFECT_UNLEARNING_TOLERANCE,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding::GeneratorMatrix;
    use crate::dataset::{gen_synthetic, Dataset, SyntheticKind, SyntheticSpec};
    use crate::numerics::ridge_solve;
    use crate::projections::{FeatureMap, ProjectionMap};

    fn data(n: usize, d: usize, seed: u64) -> Dataset {
        gen_synthetic(&SyntheticSpec::new(SyntheticKind::GaussianLinear, n, d, seed)).unwrap()
    }

    fn config(s: usize, r: usize, density: DensityMode, lambda: f64) -> LearnConfig {
        LearnConfig {
            s,
            r,
            density,
            lambda,
            seed: 11,
            parallel: false,
        }
    }

    #[test]
    fn single_shard_is_plain_ridge() {
        let ds = data(60, 4, 1);
        let out = learn(&ds, &config(1, 1, DensityMode::Minimal, 0.01), FeatureMap::identity()).unwrap();
        let w = ridge_solve(ds.features(), ds.response(), 0.01).unwrap();
        assert_eq!(out.model.agg().as_slice(), w.as_slice());
        assert_eq!(out.model.n_learners(), 1);
    }

    #[test]
    fn s_one_rejects_r_above_one() {
        let ds = data(20, 2, 1);
        assert!(learn(&ds, &config(1, 2, DensityMode::Minimal, 0.0), FeatureMap::identity()).is_err());
    }

    #[test]
    fn identity_generator_trains_each_shard_alone() {
        let ds = data(90, 3, 2);
        let fm = FeatureMap::identity();
        let mapped = ds.clone();
        let store = crate::coding::encode(&mapped, &GeneratorMatrix::identity(3).unwrap()).unwrap();
        for j in 0..3 {
            let positions: Vec<usize> = (0..30).map(|k| j * 30 + k).collect();
            let part = ds.select(&positions);
            let w = ridge_solve(part.features(), part.response(), 0.1).unwrap();
            let coded = ridge_solve(&store.shard(j).features, &store.shard(j).response, 0.1).unwrap();
            assert_eq!(w.as_slice(), coded.as_slice());
        }
        let _ = fm;
    }

    #[test]
    fn agg_is_mean_of_learners() {
        let ds = data(200, 5, 3);
        let out = learn(&ds, &config(8, 5, DensityMode::Bernoulli { rho: 0.4 }, 0.05), FeatureMap::identity()).unwrap();
        let m = &out.model;
        let x = data(30, 5, 99);
        let per = m.predict_per_learner(x.features()).unwrap();
        let pred = m.predict(x.features()).unwrap();
        for i in 0..x.len() {
            let mean = per.row(i).iter().sum::<f64>() / m.n_learners() as f64;
            assert!((mean - pred[i]).abs() <= 1e-10 * (1.0 + mean.abs()));
        }
    }

    #[test]
    fn learned_model_is_deterministic() {
        let ds = data(120, 4, 4);
        let cfg = config(6, 4, DensityMode::Bernoulli { rho: 0.5 }, 0.0);
        let a = learn(&ds, &cfg, FeatureMap::identity()).unwrap();
        let b = learn(&ds, &LearnConfig { parallel: true, ..cfg }, FeatureMap::identity()).unwrap();
        assert_eq!(a.model.weights(), b.model.weights());
        assert_eq!(a.generator(), b.generator());
    }

    fn unlearn_and_verify(density: DensityMode, lambda: f64, fm: FeatureMap, ids: &[usize]) -> VerificationReport {
        let ds = data(250, 4, 5);
        let mut out = learn(&ds, &config(10, 6, density, lambda), fm).unwrap();
        let req = UnlearnRequest::from_dataset(&ds, ids).unwrap();
        let report = unlearn(&mut out.model, &mut out.store, &req, UnlearnOptions::default()).unwrap();
        for (k, &id) in ids.iter().enumerate() {
            let shard = out.store.location(id).unwrap().shard;
            assert_eq!(report.touched_per_sample[k], out.generator().row_weight(shard));
        }
        let survivors = surviving(&ds, &out.store);
        assert_eq!(survivors.len(), ds.len() - ids.len());
        verify_perfect_unlearning(&out.model, &out.store, &survivors).unwrap()
    }

    #[test]
    fn unlearning_matches_retraining() {
        let v = unlearn_and_verify(DensityMode::Bernoulli { rho: 0.5 }, 0.0, FeatureMap::identity(), &[3, 17, 200]);
        assert!(v.passed, "{v:?}");
        let fm = FeatureMap {
            projection: Some(ProjectionMap::new(4, 8, 2).unwrap()),
            intercept: true,
        };
        let v = unlearn_and_verify(DensityMode::Minimal, 0.01, fm, &[0]);
        assert!(v.passed, "{v:?}");
    }

    #[test]
    fn whole_uncoded_shard_can_be_unlearned() {
        // n̄ = 25; shard 0 holds the first 25 placed samples.
        let ds = data(250, 4, 5);
        let mut out = learn(&ds, &config(10, 6, DensityMode::Bernoulli { rho: 0.5 }, 0.1), FeatureMap::identity()).unwrap();
        let ids: Vec<usize> = ds
            .ids()
            .iter()
            .copied()
            .filter(|&id| out.store.location(id).is_some_and(|l| l.shard == 0))
            .collect();
        assert_eq!(ids.len(), 25);
        let req = UnlearnRequest::from_dataset(&ds, &ids).unwrap();
        unlearn(&mut out.model, &mut out.store, &req, UnlearnOptions::default()).unwrap();
        let v = verify_perfect_unlearning(&out.model, &out.store, &surviving(&ds, &out.store)).unwrap();
        assert!(v.passed, "{v:?}");
    }

    #[test]
    fn result_does_not_depend_on_forgotten_values() {
        let ds = data(100, 3, 6);
        let mut other = ds.features().as_slice().to_vec();
        other[7 * 3] += 1000.0;
        let perturbed = ds
            .replace_values(crate::numerics::Matrix::new(100, 3, other).unwrap(), ds.response().clone())
            .unwrap();
        let cfg = config(4, 3, DensityMode::Bernoulli { rho: 0.6 }, 0.05);
        let mut a = learn(&ds, &cfg, FeatureMap::identity()).unwrap();
        let mut b = learn(&perturbed, &cfg, FeatureMap::identity()).unwrap();
        unlearn(&mut a.model, &mut a.store, &UnlearnRequest::from_dataset(&ds, &[7]).unwrap(), UnlearnOptions::default()).unwrap();
        unlearn(&mut b.model, &mut b.store, &UnlearnRequest::from_dataset(&perturbed, &[7]).unwrap(), UnlearnOptions::default()).unwrap();
        assert!(relative_discrepancy(b.model.agg(), a.model.agg()) <= 1e-8);
    }

    #[test]
    fn only_affected_learners_change() {
        let ds = data(250, 4, 7);
        let mut out = learn(&ds, &config(10, 6, DensityMode::Bernoulli { rho: 0.3 }, 0.1), FeatureMap::identity()).unwrap();
        let before = out.model.weights().clone();
        let report = unlearn(&mut out.model, &mut out.store, &UnlearnRequest::from_dataset(&ds, &[42]).unwrap(), UnlearnOptions::default()).unwrap();
        let shard = out.store.location(42).unwrap().shard;
        assert_eq!(report.affected, out.generator().row_support(shard));
        for j in 0..6 {
            if !report.affected.contains(&j) {
                assert_eq!(before.column(j), out.model.weights().column(j));
            }
        }
    }

    #[test]
    fn bad_requests_leave_state_untouched() {
        let ds = data(100, 3, 8);
        let mut out = learn(&ds, &config(4, 3, DensityMode::Minimal, 0.1), FeatureMap::identity()).unwrap();
        let snapshot = (out.model.clone(), out.store.shards().to_vec());
        let err = unlearn(&mut out.model, &mut out.store, &UnlearnRequest::from_dataset(&ds, &[1, 1]).unwrap(), UnlearnOptions::default());
        assert!(matches!(err, Err(crate::Error::AlreadyUnlearned(1))));
        let stray = UnlearnRequest::new(vec![5000], crate::numerics::Matrix::zeros(1, 3), crate::numerics::Vector::zeros(1)).unwrap();
        assert!(matches!(
            unlearn(&mut out.model, &mut out.store, &stray, UnlearnOptions::default()),
            Err(crate::Error::UnknownSample(5000))
        ));
        assert_eq!(snapshot.0, out.model);
        assert_eq!(snapshot.1, out.store.shards());
        assert!(out.store.unlearned_ids().is_empty());

        let req = UnlearnRequest::from_dataset(&ds, &[1]).unwrap();
        unlearn(&mut out.model, &mut out.store, &req, UnlearnOptions::default()).unwrap();
        assert!(matches!(
            unlearn(&mut out.model, &mut out.store, &req, UnlearnOptions::default()),
            Err(crate::Error::AlreadyUnlearned(1))
        ));
    }

    #[test]
    fn verification_catches_a_stale_model() {
        let ds = data(100, 3, 9);
        let mut out = learn(&ds, &config(4, 3, DensityMode::Minimal, 0.1), FeatureMap::identity()).unwrap();
        let keep: Vec<bool> = ds.ids().iter().map(|&id| id != 10).collect();
        let v = verify_perfect_unlearning(&out.model, &out.store, &ds.filter(&keep)).unwrap();
        assert!(!v.passed);
        unlearn(&mut out.model, &mut out.store, &UnlearnRequest::from_dataset(&ds, &[10]).unwrap(), UnlearnOptions::default()).unwrap();
        assert!(verify_perfect_unlearning(&out.model, &out.store, &ds.filter(&keep)).unwrap().passed);
    }

    #[test]
    fn relative_discrepancy_handles_zero_reference() {
        assert_eq!(relative_discrepancy(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(relative_discrepancy(&[0.5], &[0.0]), 0.5);
        assert!((relative_discrepancy(&[1.1, 4.0], &[1.0, 4.0]) - 0.025).abs() < 1e-15);
    }
}
