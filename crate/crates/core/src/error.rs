use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}: {source}")]
    Manifest {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic {
        expected: &'static str,
        found: [u8; 4],
    },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("payload length mismatch: header declares {expected} bytes, file holds {found}")]
    PayloadLength { expected: u64, found: u64 },

    #[error("empty dimension: n = {n}, d = {d}")]
    EmptyDimension { n: usize, d: usize },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("manifest lists {samples} samples but the matrix has {rows} rows")]
    RowMismatch { rows: usize, samples: usize },

    #[error("invalid sample metadata for {image_id}: {reason}")]
    InvalidSample { image_id: String, reason: String },

    #[error("filter matched no samples")]
    EmptySelection,

    #[error("fewer than 2 samples ({0}) for covariance estimation")]
    TooFewSamples(usize),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),

    #[error("non-positive eigenvalue {value:e} at index {index}")]
    NonPositiveEigenvalue { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("scores and labels need at least one normal and one anomalous sample")]
    SingleClass,

    #[error("length mismatch: {scores} scores, {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },

    #[error("component index {index} out of range for d = {d}")]
    IndexOutOfRange { index: usize, d: usize },

    #[error("duplicate component index {0}")]
    DuplicateIndex(usize),

    #[error("invalid k = {k} for d = {d}")]
    InvalidK { k: usize, d: usize },

    #[error("invalid range [{lo}, {hi}) for d = {d}")]
    InvalidRange { lo: usize, hi: usize, d: usize },

    #[error("invalid split: {0}")]
    InvalidSplit(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    #[error("invalid curve data: {0}")]
    InvalidCurve(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
