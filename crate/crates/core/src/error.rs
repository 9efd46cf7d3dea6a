use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the learning/unlearning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("singular system (condition estimate {condition:.3e})")]
    SingularSystem { condition: f64 },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("bad split size: n_train = {n_train}, n = {n}")]
    BadSplitSize { n_train: usize, n: usize },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("filtering removed every sample")]
    EmptyResult,

    #[error("density {rho} outside [{min}, 1]")]
    DensityOutOfRange { rho: f64, min: f64 },

    #[error("generator matrix not found after {attempts} resamples (s = {s}, r = {r}, rho = {rho})")]
    NonTermination {
        attempts: usize,
        s: usize,
        r: usize,
        rho: f64,
    },

    #[error("too few samples: {n} rows for {s} shards")]
    TooFewSamples { n: usize, s: usize },

    #[error("unknown sample id {0}")]
    UnknownSample(usize),

    #[error("sample id {0} already unlearned")]
    AlreadyUnlearned(usize),

    #[error("unlearn request row for sample {0} does not match the stored sample")]
    RequestMismatch(usize),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
