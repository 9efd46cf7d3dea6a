use coded_unlearning::bench::{
    emit_results, run_influence, run_tradeoff, DataSource, InfluenceAxis, InfluenceSpec, OutputFormat, Preprocess,
    SweepSpec, TradeoffRecord,
};
use coded_unlearning::dataset::{RemovalMode, SyntheticKind, SyntheticSpec};
use coded_unlearning::ensemble::DensityMode;

fn sweep(shard_counts: Vec<usize>, parallel_cells: bool) -> SweepSpec {
    let mut data = SyntheticSpec::new(SyntheticKind::LognormalPoly, 500, 4, 21);
    data.sigma2 = 0.6;
    SweepSpec {
        dataset: "small".into(),
        source: DataSource::Synthetic(data),
        preprocess: Preprocess {
            n_train: 400,
            projection_dim: Some(10),
            intercept: true,
        },
        lambdas: vec![1e-3],
        rates: vec![1.0, 2.0],
        shard_counts,
        runs: 4,
        seed: 31,
        density: DensityMode::Minimal,
        parallel_cells,
        parallel_learners: false,
    }
}

/// Every column except the wall-clock ones.
fn deterministic_part(r: &TradeoffRecord) -> (usize, usize, u64, u64, u64, u64, u64, u64, u64) {
    (
        r.s,
        r.r,
        r.tau.to_bits(),
        r.test_mse_mean.to_bits(),
        r.test_mse_std.to_bits(),
        r.train_mse_mean.to_bits(),
        r.affected_learners_mean.to_bits(),
        r.cost_proxy.to_bits(),
        r.test_mse_pre_mean.to_bits(),
    )
}

#[test]
fn sweep_results_do_not_depend_on_scheduling() {
    let a = run_tradeoff(&sweep(vec![2, 4, 8], true)).unwrap();
    let b = run_tradeoff(&sweep(vec![2, 4, 8], false)).unwrap();
    assert_eq!(a.len(), 6);
    let da: Vec<_> = a.iter().map(deterministic_part).collect();
    let db: Vec<_> = b.iter().map(deterministic_part).collect();
    assert_eq!(da, db);
    assert!(a.iter().all(|r| r.error.is_none()));
}

#[test]
fn a_cell_does_not_depend_on_its_neighbours() {
    let full = run_tradeoff(&sweep(vec![2, 4, 8], true)).unwrap();
    let alone = run_tradeoff(&sweep(vec![4], true)).unwrap();
    for rec in &alone {
        let same = full.iter().find(|r| r.s == rec.s && r.tau == rec.tau).unwrap();
        assert_eq!(deterministic_part(rec), deterministic_part(same));
    }
}

#[test]
fn sweep_bookkeeping() {
    let recs = run_tradeoff(&sweep(vec![2, 4, 8], true)).unwrap();
    for r in &recs {
        assert_eq!(r.r as f64 * r.tau, r.s as f64);
        assert_eq!(r.shard_size, 400 / r.s);
        assert_eq!(r.dim, 10);
        // minimal codes retrain exactly one learner per unlearned sample
        assert_eq!(r.affected_learners_mean, 1.0);
        assert_eq!(r.cost_proxy, (r.shard_size * 11 * 11) as f64);
        assert!(r.test_mse_mean.is_finite() && r.test_mse_std >= 0.0);
    }
}

#[test]
fn csv_output_round_trips_exactly() {
    let spec = sweep(vec![2, 4], true);
    let recs = run_tradeoff(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    emit_results(&recs, &path, OutputFormat::Csv, &spec).unwrap();

    let mut rdr = csv::Reader::from_path(&path).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), recs.len());
    for (row, rec) in rows.iter().zip(&recs) {
        let mse: f64 = row[col("test_mse_mean")].parse().unwrap();
        assert_eq!(mse.to_bits(), rec.test_mse_mean.to_bits());
        let std: f64 = row[col("test_mse_std")].parse().unwrap();
        assert_eq!(std.to_bits(), rec.test_mse_std.to_bits());
        assert_eq!(row[col("s")].parse::<usize>().unwrap(), rec.s);
        assert_eq!(&row[col("error")], "");
    }

    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out.csv.meta.json")).unwrap()).unwrap();
    let echoed: SweepSpec = serde_json::from_value(meta["spec"].clone()).unwrap();
    assert_eq!(echoed, spec);
    assert_eq!(meta["records"], recs.len());
}

#[test]
fn json_output_carries_the_documented_fields() {
    let spec = sweep(vec![2], true);
    let recs = run_tradeoff(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    emit_results(&recs, &path, OutputFormat::Json, &spec).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let first = doc.as_array().unwrap()[0].as_object().unwrap();
    for key in [
        "dataset", "s", "r", "tau", "rho_mode", "lambda", "D", "n_train", "shard_size", "runs", "test_mse_mean",
        "test_mse_std", "train_mse_mean", "unlearn_seconds_mean", "learn_seconds_mean", "affected_learners_mean",
        "cost_proxy",
    ] {
        assert!(first.contains_key(key), "missing {key}");
    }
}

#[test]
fn failing_cells_are_marked_not_fatal() {
    // 500 shards of 400 training rows cannot be filled
    let mut spec = sweep(vec![2, 500], true);
    spec.rates = vec![1.0];
    let recs = run_tradeoff(&spec).unwrap();
    assert_eq!(recs.len(), 2);
    assert!(recs[0].error.is_none());
    assert!(recs[1].error.is_some());
    assert!(recs[1].test_mse_mean.is_nan());
}

#[test]
fn influence_is_deterministic_and_starts_at_the_baseline() {
    let spec = InfluenceSpec {
        dataset: "gl".into(),
        source: DataSource::Synthetic(SyntheticSpec::new(SyntheticKind::GaussianLinear, 400, 3, 5)),
        preprocess: Preprocess {
            n_train: 300,
            projection_dim: None,
            intercept: true,
        },
        lambda: 0.0,
        axis: InfluenceAxis::Percentiles(vec![0.0, 5.0, 15.0]),
        runs: 3,
        seed: 8,
        modes: vec![RemovalMode::Outliers, RemovalMode::Inliers],
    };
    let a = run_influence(&spec).unwrap();
    let b = run_influence(&spec).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 6);
    let at_zero: Vec<_> = a.iter().filter(|r| r.percentile == 0.0).collect();
    assert_eq!(at_zero.len(), 2);
    assert_eq!(at_zero[0].test_mse_mean, at_zero[1].test_mse_mean);
    assert!(at_zero.iter().all(|r| r.remaining_pct == 100.0));
}
