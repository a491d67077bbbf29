//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Operator applied to arrays whose extents do not conform.
    #[error("shape mismatch in `{op}`: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// Backward pass requested from a node that is not a 1x1 scalar.
    #[error("backward requires a scalar loss node, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    /// Batch statistics are undefined for a single observation.
    #[error("batch normalization in training mode needs a batch of at least 2 rows, got {rows}")]
    BatchTooSmall { rows: usize },

    /// A value that must be finite is NaN or infinite.
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    /// Optimization diverged (loss became non-finite).
    #[error("divergence at step {step}: loss is non-finite")]
    Divergence { step: usize },

    /// An operation that needs posterior draws got an empty chain.
    #[error("posterior chain is empty")]
    EmptyChain,

    /// Too many posterior draws had numerically unstable MRS denominators.
    #[error("unstable MRS: {flagged} of {total} draws flagged (|denominator mean| < {threshold:e})")]
    UnstableMrs {
        flagged: usize,
        total: usize,
        threshold: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    /// CSV cell failed to parse, with its location.
    #[error("cannot parse `{value}` as a number at row {row}, column `{column}`")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("config error: {0}")]
    Config(String),

    /// Persisted file carries an unsupported format version.
    #[error("unsupported {what} version {found}, expected {expected}")]
    Version {
        what: &'static str,
        found: u32,
        expected: u32,
    },

    #[error("too many replications failed: {failed} of {total}")]
    ReplicationFailures { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
