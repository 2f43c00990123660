use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("bad magic bytes: expected \"VLEB\"")]
    BadMagic,

    #[error("unsupported bundle version {0} (supported: 1)")]
    UnsupportedVersion(u16),

    #[error("unsupported bundle flags {0:#06x}")]
    UnsupportedFlags(u16),

    #[error("truncated payload while reading {0}")]
    Truncated(String),

    #[error("{0} trailing bytes after last record")]
    TrailingBytes(usize),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid embedding matrix: {0}")]
    InvalidMatrix(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("zero-norm vector in {0}")]
    ZeroNorm(String),

    #[error("record {sample_id}: {source}")]
    Record {
        sample_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing input: {0}")]
    Missing(String),

    #[error("both classes are required, found only {0}")]
    SingleClass(&'static str),

    #[error("degenerate calibration: {0}")]
    DegenerateCalibration(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),
}

impl Error {
    pub(crate) fn in_record(self, sample_id: &str) -> Self {
        match self {
            e @ Error::Record { .. } => e,
            e => Error::Record {
                sample_id: sample_id.to_string(),
                source: Box::new(e),
            },
        }
    }
}
