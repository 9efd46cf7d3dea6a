use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{InfluenceRecord, TradeoffRecord};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::InvalidSpec(format!("unknown format `{other}`"))),
        }
    }
}

/// A row of a results table.
pub trait ResultRecord: Serialize {
    const COLUMNS: &'static [&'static str];

    fn csv_fields(&self) -> Vec<String>;
}

/// 17 significant digits, enough to recover every f64 exactly.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

impl ResultRecord for TradeoffRecord {
    const COLUMNS: &'static [&'static str] = &[
        "dataset",
        "s",
        "r",
        "tau",
        "rho_mode",
        "lambda",
        "D",
        "n_train",
        "shard_size",
        "runs",
        "test_mse_mean",
        "test_mse_std",
        "train_mse_mean",
        "unlearn_seconds_mean",
        "learn_seconds_mean",
        "affected_learners_mean",
        "cost_proxy",
        "test_mse_pre_mean",
        "train_exceeds_test",
        "error",
    ];

    fn csv_fields(&self) -> Vec<String> {
        vec![
            self.dataset.clone(),
            self.s.to_string(),
            self.r.to_string(),
            format_float(self.tau),
            self.rho_mode.clone(),
            format_float(self.lambda),
            self.dim.to_string(),
            self.n_train.to_string(),
            self.shard_size.to_string(),
            self.runs.to_string(),
            format_float(self.test_mse_mean),
            format_float(self.test_mse_std),
            format_float(self.train_mse_mean),
            format_float(self.unlearn_seconds_mean),
            format_float(self.learn_seconds_mean),
            format_float(self.affected_learners_mean),
            format_float(self.cost_proxy),
            format_float(self.test_mse_pre_mean),
            self.train_exceeds_test.to_string(),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

impl ResultRecord for InfluenceRecord {
    const COLUMNS: &'static [&'static str] = &[
        "dataset",
        "mode",
        "percentile",
        "remaining_pct",
        "test_mse_mean",
        "test_mse_std",
        "runs",
        "target_remaining_pct",
        "error",
    ];

    fn csv_fields(&self) -> Vec<String> {
        vec![
            self.dataset.clone(),
            self.mode.as_str().to_string(),
            format_float(self.percentile),
            format_float(self.remaining_pct),
            format_float(self.test_mse_mean),
            format_float(self.test_mse_std),
            self.runs.to_string(),
            opt_float(self.target_remaining_pct),
            self.error.clone().unwrap_or_default(),
        ]
    }
}

/// Writes records as CSV (header + one row each) or a JSON array.
pub fn write_results<R: ResultRecord, W: Write>(records: &[R], mut writer: W, format: OutputFormat) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let err = |e: csv::Error| Error::Serde(e.to_string());
            let mut wtr = csv::Writer::from_writer(&mut writer);
            wtr.write_record(R::COLUMNS).map_err(err)?;
            for r in records {
                wtr.write_record(r.csv_fields()).map_err(err)?;
            }
            wtr.flush().map_err(|e| Error::Serde(e.to_string()))?;
        }
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut writer, records).map_err(|e| Error::Serde(e.to_string()))?;
            writer.write_all(b"\n").map_err(|e| Error::Serde(e.to_string()))?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct Sidecar<'a, E: Serialize> {
    format: OutputFormat,
    columns: &'a [&'a str],
    records: usize,
    spec: &'a E,
}

/// Writes `records` to `path` and the producing spec to `<path>.meta.json`.
pub fn emit_results<R: ResultRecord, E: Serialize>(
    records: &[R],
    path: &Path,
    format: OutputFormat,
    spec: &E,
) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidSpec("no records to write".into()));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_results(records, std::io::BufWriter::new(file), format)?;

    let mut meta = path.as_os_str().to_owned();
    meta.push(".meta.json");
    let meta = Path::new(&meta);
    let sidecar = Sidecar {
        format,
        columns: R::COLUMNS,
        records: records.len(),
        spec,
    };
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Serde(e.to_string()))?;
    std::fs::write(meta, text + "\n").map_err(|e| Error::io(meta, e))
}
