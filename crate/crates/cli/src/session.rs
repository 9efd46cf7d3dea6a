//! On-disk training session: everything needed to unlearn and verify later.
//!
//! ```text
//! <dir>/manifest.json        config echo, store layout, normalization, file hashes
//! <dir>/generator.json
//! <dir>/projection.bin       only with a random projection
//! <dir>/shards/shard_<j>.csv coded shards
//! <dir>/model.csv            weak-learner weights
//! <dir>/train.csv            surviving normalized training rows, with ids
//! <dir>/holdout.csv          optional held-out rows
//! <dir>/unlearn_log.jsonl    append-only record of unlearn requests
//! ```
//!
//! Every file except the manifest and the lock is hashed into the manifest,
//! and the manifest is written last, so an interrupted update shows up as a
//! stale session instead of silently wrong state.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use coded_unlearning::coding::{CodedShard, CodedStore, GeneratorMatrix, StoreManifest};
use coded_unlearning::dataset::{Dataset, NormalizationRecord, SampleId};
use coded_unlearning::ensemble::EnsembleModel;
use coded_unlearning::numerics::{Matrix, Vector};
use coded_unlearning::projections::{FeatureMap, ProjectionMap};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::SessionError;

pub const MANIFEST: &str = "manifest.json";
pub const LOG: &str = "unlearn_log.jsonl";
const GENERATOR: &str = "generator.json";
const PROJECTION: &str = "projection.bin";
const MODEL: &str = "model.csv";
const TRAIN: &str = "train.csv";
const HOLDOUT: &str = "holdout.csv";
const LOCK: &str = "session.lock";
const ID_COLUMN: &str = "sample_id";
const VERSION: u32 = 1;

pub fn shard_file(j: usize) -> String {
    format!("shards/shard_{j}.csv")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    /// Fully resolved training config.
    pub config: serde_json::Value,
    pub input_dim: usize,
    pub feature_names: Vec<String>,
    pub response_name: String,
    pub lambda: f64,
    pub intercept: bool,
    pub projection: Option<String>,
    pub normalization: Option<NormalizationRecord>,
    pub holdout: Option<String>,
    pub store: StoreManifest,
    /// sha256 of every artifact, keyed by path relative to the session.
    pub files: BTreeMap<String, String>,
}

pub struct Session {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub model: EnsembleModel,
    pub store: CodedStore,
    pub train: Dataset,
    pub holdout: Option<Dataset>,
}

/// Exclusive hold on a session directory, released on drop.
pub struct Lock {
    path: PathBuf,
}

impl Lock {
    pub fn acquire(dir: &Path) -> anyhow::Result<Lock> {
        let path = dir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Lock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(SessionError::Locked(path.display().to_string()).into())
            }
            Err(e) => Err(e).with_context(|| format!("creating {}", path.display())),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Clears a previous session's files (not the lock) before a forced retrain.
pub fn remove_artifacts(dir: &Path) -> anyhow::Result<()> {
    for rel in [MANIFEST, GENERATOR, PROJECTION, MODEL, TRAIN, HOLDOUT, LOG] {
        match fs::remove_file(dir.join(rel)) {
            Err(e) if e.kind() != std::io::ErrorKind::NotFound => return Err(e.into()),
            _ => {}
        }
    }
    let shards = dir.join("shards");
    if shards.is_dir() {
        fs::remove_dir_all(&shards).with_context(|| format!("removing {}", shards.display()))?;
    }
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_atomic(dir: &Path, rel: &str, bytes: &[u8]) -> anyhow::Result<()> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, &path).with_context(|| format!("replacing {}", path.display()))?;
    Ok(())
}

/// Rows as `sample_id,<features>,<response>`, floats in round-trip form.
fn dataset_bytes(ds: &Dataset) -> anyhow::Result<Vec<u8>> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let mut header = vec![ID_COLUMN.to_string()];
    header.extend(ds.feature_names().iter().cloned());
    header.push(ds.response_name().to_string());
    wtr.write_record(&header)?;
    for (pos, &id) in ds.ids().iter().enumerate() {
        let mut cells = vec![id.to_string()];
        cells.extend(ds.features().row(pos).iter().map(f64::to_string));
        cells.push(ds.response()[pos].to_string());
        wtr.write_record(&cells)?;
    }
    Ok(wtr.into_inner()?)
}

fn parse_dataset(bytes: &[u8], names: &[String], response_name: &str) -> anyhow::Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(bytes);
    let width = names.len();
    if rdr.headers()?.len() != width + 2 {
        anyhow::bail!("expected {} columns", width + 2);
    }
    let mut ids = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        ids.push(rec[0].parse::<SampleId>()?);
        for cell in rec.iter().skip(1).take(width) {
            x.push(cell.parse::<f64>()?);
        }
        y.push(rec[width + 1].parse::<f64>()?);
    }
    Ok(Dataset::from_parts(
        Matrix::new(ids.len(), width, x)?,
        Vector::new(y)?,
        ids,
        names.to_vec(),
        response_name.to_string(),
    )?)
}

fn shard_bytes(shard: &CodedShard) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    shard.write_csv(&mut buf)?;
    Ok(buf)
}

fn model_bytes(model: &EnsembleModel) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    model.write_weights_csv(&mut buf)?;
    Ok(buf)
}

pub struct NewSession<'a> {
    pub config: serde_json::Value,
    pub model: EnsembleModel,
    pub store: CodedStore,
    pub train: Dataset,
    pub holdout: Option<Dataset>,
    pub normalization: Option<NormalizationRecord>,
    pub lock: &'a Lock,
}

impl Session {
    /// Writes a fresh session into `dir`, which must already be locked.
    pub fn create(dir: &Path, new: NewSession<'_>) -> anyhow::Result<Session> {
        let fm = new.model.feature_map().clone();
        let mut files = BTreeMap::new();
        let mut put = |rel: &str, bytes: Vec<u8>| -> anyhow::Result<()> {
            write_atomic(dir, rel, &bytes)?;
            files.insert(rel.to_string(), sha256_hex(&bytes));
            Ok(())
        };
        put(GENERATOR, serde_json::to_vec_pretty(new.store.generator())?)?;
        if let Some(p) = &fm.projection {
            put(PROJECTION, p.to_bytes())?;
        }
        for (j, shard) in new.store.shards().iter().enumerate() {
            put(&shard_file(j), shard_bytes(shard)?)?;
        }
        put(MODEL, model_bytes(&new.model)?)?;
        put(TRAIN, dataset_bytes(&new.train)?)?;
        if let Some(h) = &new.holdout {
            put(HOLDOUT, dataset_bytes(h)?)?;
        }
        put(LOG, Vec::new())?;
        let manifest = Manifest {
            version: VERSION,
            config: new.config,
            input_dim: new.model.input_dim(),
            feature_names: new.train.feature_names().to_vec(),
            response_name: new.train.response_name().to_string(),
            lambda: new.model.lambda(),
            intercept: fm.intercept,
            projection: fm.projection.as_ref().map(|_| PROJECTION.to_string()),
            normalization: new.normalization,
            holdout: new.holdout.as_ref().map(|_| HOLDOUT.to_string()),
            store: new.store.manifest(shard_file, GENERATOR),
            files,
        };
        let mut session = Session {
            dir: dir.to_path_buf(),
            manifest,
            model: new.model,
            store: new.store,
            train: new.train,
            holdout: new.holdout,
        };
        session.write_manifest(new.lock)?;
        Ok(session)
    }

    /// Loads a session, refusing if any artifact's hash disagrees with the manifest.
    pub fn open(dir: &Path) -> anyhow::Result<Session> {
        let manifest_path = dir.join(MANIFEST);
        if !manifest_path.is_file() {
            return Err(SessionError::NotFound(dir.display().to_string()).into());
        }
        let manifest: Manifest = serde_json::from_slice(&fs::read(&manifest_path)?)
            .map_err(|e| SessionError::Stale(format!("unreadable manifest: {e}")))?;
        if manifest.version != VERSION {
            return Err(SessionError::Stale(format!("manifest version {}", manifest.version)).into());
        }
        let mut contents: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
        for (rel, hash) in &manifest.files {
            let bytes = fs::read(dir.join(rel)).map_err(|e| SessionError::Stale(format!("{rel}: {e}")))?;
            if sha256_hex(&bytes) != *hash {
                return Err(SessionError::Stale(format!("{rel} does not match its recorded hash")).into());
            }
            contents.insert(rel, bytes);
        }
        let get = |rel: &str| -> anyhow::Result<&[u8]> {
            contents
                .get(rel)
                .map(Vec::as_slice)
                .ok_or_else(|| SessionError::Stale(format!("{rel} is not listed in the manifest")).into())
        };
        let generator: GeneratorMatrix = serde_json::from_slice(get(&manifest.store.generator_file)?)?;
        let shards = manifest
            .store
            .shard_files
            .iter()
            .map(|rel| Ok(CodedShard::read_csv(get(rel)?)?))
            .collect::<anyhow::Result<Vec<_>>>()?;
        let store = CodedStore::from_parts(&manifest.store, generator, shards)?;
        let projection = match &manifest.projection {
            Some(rel) => Some(ProjectionMap::from_bytes(get(rel)?)?),
            None => None,
        };
        let feature_map = FeatureMap {
            projection,
            intercept: manifest.intercept,
        };
        let weights = EnsembleModel::read_weights_csv(get(MODEL)?)?;
        let model = EnsembleModel::new(weights, manifest.lambda, feature_map, manifest.input_dim)?;
        let train = parse_dataset(get(TRAIN)?, &manifest.feature_names, &manifest.response_name)
            .with_context(|| format!("parsing {TRAIN}"))?;
        let holdout = match &manifest.holdout {
            Some(rel) => Some(
                parse_dataset(get(rel)?, &manifest.feature_names, &manifest.response_name)
                    .with_context(|| format!("parsing {rel}"))?,
            ),
            None => None,
        };
        get(LOG)?;
        Ok(Session {
            dir: dir.to_path_buf(),
            manifest,
            model,
            store,
            train,
            holdout,
        })
    }

    fn put(&mut self, rel: &str, bytes: &[u8]) -> anyhow::Result<()> {
        write_atomic(&self.dir, rel, bytes)?;
        self.manifest.files.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Persists the model, surviving rows, the listed shards and the manifest.
    pub fn save(&mut self, shards: &[usize], entry: &impl Serialize, lock: &Lock) -> anyhow::Result<()> {
        for &j in shards {
            let bytes = shard_bytes(self.store.shard(j))?;
            self.put(&shard_file(j), &bytes)?;
        }
        let model = model_bytes(&self.model)?;
        self.put(MODEL, &model)?;
        let train = dataset_bytes(&self.train)?;
        self.put(TRAIN, &train)?;

        let log_path = self.dir.join(LOG);
        let mut line = serde_json::to_vec(entry)?;
        line.push(b'\n');
        OpenOptions::new()
            .append(true)
            .open(&log_path)
            .and_then(|mut f| f.write_all(&line))
            .with_context(|| format!("appending to {}", log_path.display()))?;
        let log = fs::read(&log_path)?;
        self.manifest.files.insert(LOG.to_string(), sha256_hex(&log));

        self.manifest.store = self.store.manifest(shard_file, GENERATOR);
        self.write_manifest(lock)
    }

    /// Ids listed across every unlearn log entry.
    pub fn logged_ids(&self) -> anyhow::Result<BTreeSet<SampleId>> {
        #[derive(Deserialize)]
        struct Entry {
            ids: Vec<SampleId>,
        }
        let text = fs::read_to_string(self.dir.join(LOG))?;
        let mut ids = BTreeSet::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let entry: Entry = serde_json::from_str(line)
                .map_err(|e| SessionError::Stale(format!("{LOG} line {}: {e}", i + 1)))?;
            ids.extend(entry.ids);
        }
        Ok(ids)
    }

    // Taking the lock proves the caller holds the directory.
    fn write_manifest(&mut self, _lock: &Lock) -> anyhow::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(&self.manifest)?;
        bytes.push(b'\n');
        write_atomic(&self.dir, MANIFEST, &bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trips_bitwise() {
        let x = Matrix::new(3, 2, vec![0.1, 1.0 / 3.0, 2.5e-300, -7.0, 1e10, 0.0]).unwrap();
        let y = Vector::new(vec![std::f64::consts::PI, -0.0, 42.0]).unwrap();
        let ds = Dataset::from_parts(x, y, vec![5, 9, 2], vec!["a".into(), "b".into()], "target".into()).unwrap();
        let back = parse_dataset(&dataset_bytes(&ds).unwrap(), ds.feature_names(), "target").unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn second_lock_is_refused_until_release() {
        let dir = tempfile::tempdir().unwrap();
        let first = Lock::acquire(dir.path()).unwrap();
        let err = Lock::acquire(dir.path()).err().unwrap();
        assert!(matches!(err.downcast_ref::<SessionError>(), Some(SessionError::Locked(_))));
        drop(first);
        assert!(Lock::acquire(dir.path()).is_ok());
    }
}
