//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("length mismatch: {what} (expected {expected}, found {found})")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("input contains a single class; at least two are required")]
    SingleClass,

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column {column}: `{value}` is not a finite number")]
    NonNumeric {
        row: usize,
        column: usize,
        value: String,
    },

    #[error("row {row}: invalid label `{value}` (labels are integers starting at 1)")]
    InvalidLabel { row: usize, value: String },

    #[error("label {label} outside 1..={classes}")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("feature index {index} out of range for dimension {dim}")]
    FeatureOutOfRange { index: usize, dim: usize },

    #[error("empty file: {0}")]
    EmptyFile(PathBuf),

    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error("local loss before the update is zero; contribution undefined")]
    DegenerateLoss,

    #[error("aggregation group is empty or carries zero total reputation")]
    EmptyGroup,

    #[error("no alive nodes at the start of round {round}")]
    NoAliveNodes { round: usize },

    #[error("config line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("config line {line}: key `{key}` is ambiguous; use one of {candidates}")]
    AmbiguousKey {
        line: usize,
        key: String,
        candidates: String,
    },

    #[error("config key `{key}`: {detail}")]
    Config { key: String, detail: String },

    #[error("arm {arm}: {source}")]
    Arm {
        arm: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: &str, detail: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            detail: detail.into(),
        }
    }
}
