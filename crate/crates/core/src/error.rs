use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("insufficient samples: requested {requested}, available {available}")]
    InsufficientSamples { requested: usize, available: usize },

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("non-finite loss at epoch {epoch}; learning rate is likely too high")]
    NonFiniteLoss { epoch: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("corpus too small: {got} datasets, need at least {needed}")]
    CorpusTooSmall { got: usize, needed: usize },

    #[error("dataset `{0}` has no labels")]
    Unlabeled(String),

    #[error("learner file version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("corrupt learner file: {0}")]
    CorruptFile(String),

    #[error("labels contain no positives")]
    NoPositives,

    #[error("too few non-zero paired differences: {0} (need at least 6)")]
    TooFewPairs(usize),

    #[error("dataset {0} has no siblings")]
    NoSiblings(usize),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
