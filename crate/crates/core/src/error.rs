use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("input feature {feature} (row {row}) = {value} lies outside [-1, 1]")]
    RangeViolation {
        feature: usize,
        row: usize,
        value: f64,
    },

    #[error("degenerate range: hi ({hi}) must exceed lo ({lo})")]
    DegenerateRange { lo: f64, hi: f64 },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("dataset has a single class; classification needs at least two")]
    SingleClass,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged: loss became non-finite at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("least-squares system is singular (rank {rank} < {unknowns} unknowns)")]
    Singular { rank: usize, unknowns: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
