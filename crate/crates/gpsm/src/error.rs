//! Crate-wide error type.

use thiserror::Error;

/// Unified error type for all library operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Pipeline configuration rejected before any compute.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed input text (FASTA, CSV, model file contents).
    #[error("parse error: {0}")]
    Parse(String),

    #[error("alphabet error: {0}")]
    Alphabet(String),

    #[error("ragged alignment: record '{id}' has length {found}, expected {expected}")]
    RaggedAlignment {
        id: String,
        expected: usize,
        found: usize,
    },

    #[error("empty alignment")]
    EmptyAlignment,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not enough rows: requested {requested}, available {available}")]
    InsufficientRows { requested: usize, available: usize },

    /// Pearson correlation is undefined when an input has no variance.
    #[error("undefined correlation: {0}")]
    ZeroVariance(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    /// Versioned model file with the wrong or unknown schema.
    #[error("model file error: {0}")]
    ModelFormat(String),

    /// Pipeline stage failure, wrapping the underlying cause.
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wraps an error with the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
