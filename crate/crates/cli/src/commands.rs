use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use coded_unlearning::bench::{
    derive_seed, emit_results, format_float, run_influence, run_tradeoff, stream, write_results, InfluenceRecord,
    InfluenceSpec, OutputFormat, ResultRecord, SweepSpec, TradeoffRecord,
};
use coded_unlearning::dataset::{
    gen_synthetic, load_csv, split, write_csv, ColumnSelector, NormalizationRecord, SampleId, SyntheticSpec,
};
use coded_unlearning::ensemble::{
    learn, surviving, unlearn, verify_perfect_unlearning, AffectedReport, DensityMode, LearnConfig, UnlearnOptions,
    UnlearnRequest,
};
use coded_unlearning::numerics::Matrix;
use coded_unlearning::projections::{FeatureMap, ProjectionMap};
use coded_unlearning::Error;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::config::{read_config, resolve};
use crate::failure::{usage, SessionError, VerificationFailed};
use crate::session::{self, Lock, NewSession, Session};
use crate::{BenchArgs, DensityArg, Format, GenArgs, Global, PredictArgs, SessionArgs, TrainArgs, UnlearnArgs};

/// Config file, then subcommand flags, then the global `--seed` and `--out`
/// (under `out_key`), each layer overriding the previous one.
fn resolve_with<T: DeserializeOwned>(
    g: &Global,
    args: &impl Serialize,
    with_seed: bool,
    out_key: Option<&str>,
) -> anyhow::Result<T> {
    let base = read_config(g.config.as_deref())?;
    let mut flags = match serde_json::to_value(args)? {
        Value::Object(m) => m,
        _ => Map::new(),
    };
    if let (true, Some(seed)) = (with_seed, g.seed) {
        flags.insert("seed".into(), json!(seed));
    }
    if let (Some(key), Some(out)) = (out_key, &g.out) {
        flags.insert(key.into(), json!(out));
    }
    resolve(base, &flags)
}

fn print_json(value: &impl Serialize) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn sidecar_path(path: &Path, suffix: &str) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(suffix);
    PathBuf::from(p)
}

// ------------------------------------------------------------------ gen-data

#[derive(Deserialize)]
struct GenConfig {
    #[serde(flatten)]
    spec: SyntheticSpec,
    out: PathBuf,
}

pub fn gen_data(g: &Global, args: &GenArgs) -> anyhow::Result<()> {
    let cfg: GenConfig = resolve_with(g, args, true, Some("out"))?;
    let ds = gen_synthetic(&cfg.spec)?;
    write_csv(&ds, &cfg.out)?;
    let sidecar = sidecar_path(&cfg.out, ".spec.json");
    std::fs::write(&sidecar, serde_json::to_string_pretty(&cfg.spec)? + "\n")
        .with_context(|| format!("writing {}", sidecar.display()))?;
    eprintln!("wrote {} rows x {} features to {}", ds.len(), ds.n_features(), cfg.out.display());
    Ok(())
}

// ------------------------------------------------------------------ train

fn default_response() -> ColumnSelector {
    ColumnSelector::Name("y".into())
}

fn default_density() -> DensityArg {
    DensityArg::Minimal
}

fn yes() -> bool {
    true
}

#[derive(Serialize, Deserialize, Debug)]
#[serde(deny_unknown_fields)]
struct TrainConfig {
    #[serde(default)]
    data: Option<PathBuf>,
    /// Generate the training data instead of reading `data`.
    #[serde(default)]
    synthetic: Option<SyntheticSpec>,
    #[serde(default = "default_response")]
    response: ColumnSelector,
    s: usize,
    #[serde(default)]
    r: Option<usize>,
    #[serde(default)]
    tau: Option<f64>,
    #[serde(default = "default_density")]
    density: DensityArg,
    #[serde(default)]
    rho: Option<f64>,
    #[serde(default)]
    lambda: f64,
    #[serde(default)]
    projection_dim: Option<usize>,
    #[serde(default = "yes")]
    intercept: bool,
    #[serde(default = "yes")]
    normalize: bool,
    #[serde(default)]
    n_train: Option<usize>,
    #[serde(default)]
    seed: u64,
    out: PathBuf,
    #[serde(default)]
    force: bool,
}

/// Coded shard count from `r` and/or `tau = s / r`; neither means uncoded.
fn resolve_r(s: usize, r: Option<usize>, tau: Option<f64>) -> anyhow::Result<usize> {
    if s == 0 {
        return Err(usage("s must be at least 1"));
    }
    let from_tau = match tau {
        None => None,
        Some(t) if !(t >= 1.0 && t.is_finite()) => return Err(usage(format!("tau must be >= 1, got {t}"))),
        Some(t) => {
            let r = s as f64 / t;
            if (r - r.round()).abs() > 1e-9 || r.round() < 1.0 {
                return Err(usage(format!("tau = {t} does not divide s = {s} into a whole number of coded shards")));
            }
            Some(r.round() as usize)
        }
    };
    match (r, from_tau) {
        (Some(r), Some(t)) if r != t => Err(usage(format!("r = {r} contradicts s / tau = {t}"))),
        (Some(r), _) | (None, Some(r)) => Ok(r),
        (None, None) => Ok(s),
    }
}

fn density_mode(density: DensityArg, rho: Option<f64>) -> anyhow::Result<DensityMode> {
    match (density, rho) {
        (DensityArg::Minimal, None) => Ok(DensityMode::Minimal),
        (DensityArg::Minimal, Some(_)) => Err(usage("--rho only applies to --density bernoulli")),
        (DensityArg::Bernoulli, Some(rho)) => Ok(DensityMode::Bernoulli { rho }),
        (DensityArg::Bernoulli, None) => Err(usage("--density bernoulli needs --rho")),
    }
}

pub fn train(g: &Global, args: &TrainArgs) -> anyhow::Result<()> {
    let cfg: TrainConfig = resolve_with(g, args, true, Some("out"))?;
    let r = resolve_r(cfg.s, cfg.r, cfg.tau)?;
    let density = density_mode(cfg.density, cfg.rho)?;
    let full = match (&cfg.data, &cfg.synthetic) {
        (Some(path), None) => load_csv(path, &cfg.response)?,
        (None, Some(spec)) => gen_synthetic(spec)?,
        _ => return Err(usage("give exactly one of --data or a `synthetic` spec in the config")),
    };

    let dir = cfg.out.as_path();
    if dir.join(session::MANIFEST).exists() && !cfg.force {
        return Err(usage(format!("{} already holds a session; pass --force to replace it", dir.display())));
    }
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let lock = Lock::acquire(dir)?;
    if cfg.force {
        session::remove_artifacts(dir)?;
    }

    let (train, holdout) = match cfg.n_train {
        Some(n) => {
            let (a, b) = split(&full, n, derive_seed(cfg.seed, &[stream::SPLIT]))?;
            (a, Some(b))
        }
        None => (full, None),
    };
    let (train, holdout, normalization) = if cfg.normalize {
        let rec = NormalizationRecord::fit(&train)?;
        let holdout = holdout.map(|h| rec.apply(&h)).transpose()?;
        (rec.apply(&train)?, holdout, Some(rec))
    } else {
        (train, holdout, None)
    };
    let projection = cfg
        .projection_dim
        .map(|dim| ProjectionMap::new(train.n_features(), dim, derive_seed(cfg.seed, &[stream::PROJECTION])))
        .transpose()?;
    let feature_map = FeatureMap {
        projection,
        intercept: cfg.intercept,
    };
    let learn_config = LearnConfig {
        s: cfg.s,
        r,
        density,
        lambda: cfg.lambda,
        seed: derive_seed(cfg.seed, &[stream::CODE]),
        parallel: true,
    };
    let learned = learn(&train, &learn_config, feature_map)?;
    for w in &learned.warnings {
        eprintln!("warning: {w}");
    }
    let learn_seconds = learned.learn_seconds();
    let train_mse = learned.model.mse(train.features(), train.response().as_slice())?;
    let holdout_mse = holdout
        .as_ref()
        .map(|h| learned.model.mse(h.features(), h.response().as_slice()))
        .transpose()?;

    let session = Session::create(
        dir,
        NewSession {
            config: serde_json::to_value(&cfg)?,
            model: learned.model,
            store: learned.store,
            train,
            holdout,
            normalization,
            lock: &lock,
        },
    )?;
    print_json(&json!({
        "session": dir,
        "s": cfg.s,
        "r": r,
        "density": density.label(),
        "lambda": cfg.lambda,
        "shard_size": session.store.shard_size(),
        "width": session.store.width(),
        "trained_samples": session.store.locations().len(),
        "dropped_ids": session.store.dropped_ids(),
        "train_mse": train_mse,
        "holdout_mse": holdout_mse,
        "learn_seconds": learn_seconds,
        "warnings": learned.warnings,
    }))
}

fn open_locked(dir: &Path) -> anyhow::Result<(Lock, Session)> {
    if !dir.join(session::MANIFEST).is_file() {
        return Err(SessionError::NotFound(dir.display().to_string()).into());
    }
    let lock = Lock::acquire(dir)?;
    let session = Session::open(dir)?;
    Ok((lock, session))
}

// ------------------------------------------------------------------ predict

#[derive(Deserialize)]
struct PredictConfig {
    session: PathBuf,
    data: PathBuf,
    #[serde(default)]
    out: Option<PathBuf>,
}

/// Named columns of a headed numeric CSV; `optional` columns may be absent.
struct Columns {
    ids: Option<Vec<SampleId>>,
    features: Matrix,
    response: Option<Vec<f64>>,
}

fn read_columns(path: &Path, names: &[String], response: &str, id_column: Option<&str>) -> anyhow::Result<Columns> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let feature_idx = names
        .iter()
        .map(|n| find(n).ok_or_else(|| Error::MissingColumn(n.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let response_idx = find(response);
    let id_idx = match id_column {
        Some(c) => Some(find(c).ok_or_else(|| Error::MissingColumn(c.to_string()))?),
        None => None,
    };

    let mut ids = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = |j: usize| -> Result<f64, Error> {
            rec[j].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                row: row + 2,
                column: headers[j].clone(),
                message: format!("`{}` is not a finite number", &rec[j]),
            })
        };
        for &j in &feature_idx {
            x.push(cell(j)?);
        }
        if let Some(j) = response_idx {
            y.push(cell(j)?);
        }
        if let Some(j) = id_idx {
            ids.push(rec[j].parse::<SampleId>().map_err(|_| Error::Parse {
                row: row + 2,
                column: headers[j].clone(),
                message: format!("`{}` is not a sample id", &rec[j]),
            })?);
        }
    }
    let n = x.len() / names.len().max(1);
    Ok(Columns {
        ids: id_idx.map(|_| ids),
        features: Matrix::new(n, names.len(), x)?,
        response: response_idx.map(|_| y),
    })
}

#[derive(Serialize)]
struct Prediction {
    row: usize,
    prediction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    response: Option<f64>,
}

pub fn predict(g: &Global, args: &PredictArgs) -> anyhow::Result<()> {
    let cfg: PredictConfig = resolve_with(g, args, false, Some("out"))?;
    let (_lock, session) = open_locked(&cfg.session)?;
    let m = &session.manifest;
    let cols = read_columns(&cfg.data, &m.feature_names, &m.response_name, None)?;
    let x = match &m.normalization {
        Some(rec) => rec.apply_features(&cols.features)?,
        None => cols.features.clone(),
    };
    let pred = session.model.predict(&x)?;
    let pred = match &m.normalization {
        Some(rec) => rec.invert_response(pred.as_slice())?,
        None => pred,
    };
    let rows: Vec<Prediction> = pred
        .iter()
        .enumerate()
        .map(|(i, &p)| Prediction {
            row: i,
            prediction: p,
            response: cols.response.as_ref().map(|y| y[i]),
        })
        .collect();
    let mse = cols.response.as_ref().filter(|y| !y.is_empty()).map(|y| {
        y.iter().zip(pred.iter()).map(|(t, p)| (t - p).powi(2)).sum::<f64>() / y.len() as f64
    });
    if let Some(mse) = mse {
        eprintln!("mse {}", format_float(mse));
    }

    let echo = json!({
        "session": cfg.session,
        "session_config": m.config,
        "data": cfg.data,
        "rows": rows.len(),
        "mse": mse,
    });
    let mut buf = Vec::new();
    match g.format.unwrap_or(Format::Csv) {
        Format::Csv => {
            let mut wtr = csv::Writer::from_writer(&mut buf);
            let mut header = vec!["row", "prediction"];
            if cols.response.is_some() {
                header.push("response");
            }
            wtr.write_record(&header)?;
            for p in &rows {
                let mut rec = vec![p.row.to_string(), format_float(p.prediction)];
                rec.extend(p.response.map(format_float));
                wtr.write_record(&rec)?;
            }
            wtr.flush()?;
        }
        Format::Json => {
            let mut doc = echo.clone();
            doc["predictions"] = serde_json::to_value(&rows)?;
            serde_json::to_writer_pretty(&mut buf, &doc)?;
            buf.push(b'\n');
        }
    }
    match &cfg.out {
        Some(path) => {
            std::fs::write(path, &buf).with_context(|| format!("writing {}", path.display()))?;
            if g.format.unwrap_or(Format::Csv) == Format::Csv {
                std::fs::write(sidecar_path(path, ".meta.json"), serde_json::to_string_pretty(&echo)? + "\n")?;
            }
        }
        None => std::io::stdout().lock().write_all(&buf)?,
    }
    Ok(())
}

// ------------------------------------------------------------------ unlearn

#[derive(Deserialize)]
struct UnlearnConfig {
    session: PathBuf,
    #[serde(default)]
    ids: Option<Vec<SampleId>>,
    #[serde(default)]
    ids_file: Option<PathBuf>,
    #[serde(default)]
    rows: Option<PathBuf>,
    #[serde(default)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct LogEntry<'a> {
    ids: &'a [SampleId],
    /// Requested ids that were never in a shard (left over by the split into
    /// equal shards); they are only erased from the stored rows.
    dropped: &'a [SampleId],
    affected: &'a [usize],
    touched_per_sample: &'a [usize],
    retrain_seconds: f64,
    unix_time: u64,
}

#[derive(Serialize)]
struct UnlearnOutput<'a> {
    #[serde(flatten)]
    report: &'a AffectedReport,
    dropped: &'a [SampleId],
    session: &'a Path,
    /// Holdout MSE of the updated model, on the normalized scale.
    holdout_mse: Option<f64>,
}

/// Checks caller-supplied rows (original units) against the stored samples.
fn check_rows(session: &Session, path: &Path) -> anyhow::Result<Vec<SampleId>> {
    let m = &session.manifest;
    let cols = read_columns(path, &m.feature_names, &m.response_name, Some("sample_id"))?;
    let ids = cols.ids.expect("id column requested");
    let y = cols.response.ok_or_else(|| Error::MissingColumn(m.response_name.clone()))?;
    let (x, y) = match &m.normalization {
        Some(rec) => (rec.apply_features(&cols.features)?, rec.apply_response(&y)?.into_vec()),
        None => (cols.features, y),
    };
    for (i, &id) in ids.iter().enumerate() {
        // unknown or already-forgotten ids are reported by the unlearn step
        let Some(pos) = session.train.position(id) else { continue };
        if session.train.features().row(pos) != x.row(i) || session.train.response()[pos] != y[i] {
            return Err(Error::RequestMismatch(id).into());
        }
    }
    Ok(ids)
}

fn requested_ids(cfg: &UnlearnConfig, session: &Session) -> anyhow::Result<Vec<SampleId>> {
    let given = [cfg.ids.is_some(), cfg.ids_file.is_some(), cfg.rows.is_some()];
    if given.iter().filter(|&&b| b).count() != 1 {
        return Err(usage("give exactly one of --ids, --ids-file or --rows"));
    }
    let ids = if let Some(ids) = &cfg.ids {
        ids.clone()
    } else if let Some(path) = &cfg.ids_file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: expected a JSON list of ids: {e}", path.display())))?
    } else {
        check_rows(session, cfg.rows.as_deref().expect("checked above"))?
    };
    if ids.is_empty() {
        return Err(usage("no ids to unlearn"));
    }
    Ok(ids)
}

pub fn unlearn_cmd(g: &Global, args: &UnlearnArgs) -> anyhow::Result<()> {
    let cfg: UnlearnConfig = resolve_with(g, args, false, Some("out"))?;
    let (lock, mut session) = open_locked(&cfg.session)?;
    let ids = requested_ids(&cfg, &session)?;

    let mut seen = BTreeSet::new();
    let mut placed = Vec::new();
    let mut dropped = Vec::new();
    for &id in &ids {
        if session.store.is_unlearned(id) || !seen.insert(id) {
            return Err(Error::AlreadyUnlearned(id).into());
        }
        if session.train.position(id).is_none() {
            return Err(Error::UnknownSample(id).into());
        }
        if session.store.location(id).is_some() {
            placed.push(id);
        } else {
            dropped.push(id);
        }
    }

    let report = if placed.is_empty() {
        AffectedReport {
            ids: Vec::new(),
            affected: Vec::new(),
            retrain_seconds: Vec::new(),
            touched_per_sample: Vec::new(),
        }
    } else {
        let request = UnlearnRequest::from_dataset(&session.train, &placed)?;
        unlearn(
            &mut session.model,
            &mut session.store,
            &request,
            UnlearnOptions { parallel: true },
        )?
    };
    let keep: Vec<bool> = session.train.ids().iter().map(|id| !seen.contains(id)).collect();
    session.train = session.train.filter(&keep);

    let entry = LogEntry {
        ids: &ids,
        dropped: &dropped,
        affected: &report.affected,
        touched_per_sample: &report.touched_per_sample,
        retrain_seconds: report.total_retrain_seconds(),
        unix_time: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    session.save(&report.affected, &entry, &lock)?;

    let output = UnlearnOutput {
        report: &report,
        dropped: &dropped,
        session: &cfg.session,
        holdout_mse: session
            .holdout
            .as_ref()
            .map(|h| session.model.mse(h.features(), h.response().as_slice()))
            .transpose()?,
    };
    if let Some(path) = &cfg.out {
        std::fs::write(path, serde_json::to_string_pretty(&output)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    print_json(&output)
}

// ------------------------------------------------------------------ verify

#[derive(Deserialize)]
struct VerifyConfig {
    session: PathBuf,
    #[serde(default)]
    out: Option<PathBuf>,
}

pub fn verify(g: &Global, args: &SessionArgs) -> anyhow::Result<()> {
    let cfg: VerifyConfig = resolve_with(g, args, false, Some("out"))?;
    let (_lock, session) = open_locked(&cfg.session)?;

    // The log must account for exactly the samples missing from the session.
    let present: BTreeSet<SampleId> = session.train.ids().iter().copied().collect();
    let mut expected: BTreeSet<SampleId> = session.store.unlearned_ids().clone();
    expected.extend(session.store.dropped_ids().iter().filter(|id| !present.contains(id)));
    if let Some(id) = session.store.unlearned_ids().iter().find(|id| present.contains(id)) {
        return Err(SessionError::Stale(format!("unlearned sample {id} is still stored")).into());
    }
    if session.logged_ids()? != expected {
        return Err(SessionError::Stale("unlearn log disagrees with the stored samples".into()).into());
    }

    let report = verify_perfect_unlearning(
        &session.model,
        &session.store,
        &surviving(&session.train, &session.store),
    )?;
    let output = json!({
        "session": cfg.session,
        "unlearned": session.store.unlearned_ids().len(),
        "report": report,
    });
    if let Some(path) = &cfg.out {
        std::fs::write(path, serde_json::to_string_pretty(&output)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    print_json(&output)?;
    if report.passed {
        Ok(())
    } else {
        Err(VerificationFailed(report.max_discrepancy).into())
    }
}

// ------------------------------------------------------------------ bench

fn bench<S, R>(
    g: &Global,
    args: &BenchArgs,
    run: fn(&S) -> coded_unlearning::Result<Vec<R>>,
    error: fn(&R) -> Option<&String>,
) -> anyhow::Result<()>
where
    S: DeserializeOwned + Serialize,
    R: ResultRecord,
{
    if g.config.is_none() {
        return Err(usage("benchmarks read their spec from --config <spec.json>"));
    }
    let spec: S = resolve_with(g, args, true, None)?;
    let records = run(&spec)?;
    let format: OutputFormat = g.format.unwrap_or(Format::Csv).into();
    match &g.out {
        Some(path) => emit_results(&records, path, format, &spec)?,
        None => {
            write_results(&records, std::io::stdout().lock(), format)?;
            eprintln!("spec: {}", serde_json::to_string(&spec)?);
        }
    }
    let failed: Vec<&String> = records.iter().filter_map(error).collect();
    if !failed.is_empty() {
        eprintln!("warning: {} of {} rows failed; first: {}", failed.len(), records.len(), failed[0]);
    }
    Ok(())
}

pub fn bench_tradeoff(g: &Global, args: &BenchArgs) -> anyhow::Result<()> {
    bench::<SweepSpec, TradeoffRecord>(g, args, run_tradeoff, |r| r.error.as_ref())
}

pub fn bench_influence(g: &Global, args: &BenchArgs) -> anyhow::Result<()> {
    bench::<InfluenceSpec, InfluenceRecord>(g, args, run_influence, |r| r.error.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coded_shard_count_from_rate() {
        assert_eq!(resolve_r(10, None, None).unwrap(), 10);
        assert_eq!(resolve_r(10, None, Some(5.0)).unwrap(), 2);
        assert_eq!(resolve_r(10, Some(2), Some(5.0)).unwrap(), 2);
        assert_eq!(resolve_r(9, None, Some(1.5)).unwrap(), 6);
        assert!(resolve_r(10, None, Some(3.0)).is_err());
        assert!(resolve_r(10, Some(3), Some(5.0)).is_err());
        assert!(resolve_r(10, None, Some(0.5)).is_err());
    }

    #[test]
    fn density_needs_matching_rho() {
        assert_eq!(density_mode(DensityArg::Minimal, None).unwrap(), DensityMode::Minimal);
        assert_eq!(
            density_mode(DensityArg::Bernoulli, Some(0.3)).unwrap(),
            DensityMode::Bernoulli { rho: 0.3 }
        );
        assert!(density_mode(DensityArg::Bernoulli, None).is_err());
        assert!(density_mode(DensityArg::Minimal, Some(0.3)).is_err());
    }
}
