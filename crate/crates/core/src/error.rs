use std::path::PathBuf;

use thiserror::Error;

use crate::constraints::ParseError;

pub type Result<T> = std::result::Result<T, FusionError>;

#[derive(Debug, Error)]
pub enum FusionError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("row {row}: expected {expected} cells, found {found}")]
    CellCount {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("unknown cluster `{0}`")]
    UnknownCluster(String),

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("ground truth for cluster `{cluster}`, attribute `{attribute}` is `{value}`, which no record in the cluster claims")]
    TruthNotCandidate {
        cluster: String,
        attribute: String,
        value: String,
    },

    #[error("constraint parse error (rule {rule}): {source}")]
    Constraint {
        rule: usize,
        #[source]
        source: ParseError,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite training loss at stage {stage}, attribute `{attribute}`, epoch {epoch} (loss = {loss})")]
    NonFiniteLoss {
        stage: usize,
        attribute: String,
        epoch: usize,
        loss: f64,
    },

    #[error("no model for attribute `{0}`")]
    MissingModel(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("evaluation set is empty")]
    EmptyEvalSet,

    #[error("cannot split {clusters} clusters into nonempty train/test sets with fractions ({train}, {validation})")]
    SplitTooSmall {
        clusters: usize,
        train: f64,
        validation: f64,
    },

    #[error("baseline `{0}` needs source information, which the dataset does not carry")]
    SourcesUnavailable(&'static str),

    #[error("augmentation: {0}")]
    Augmentation(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("model file: {0}")]
    ModelFormat(String),
}

impl FusionError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        FusionError::Io {
            path: path.into(),
            source,
        }
    }
}
