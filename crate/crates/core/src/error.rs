use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the reconstruction pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("singular point: {0}")]
    Singular(String),

    #[error("frequency mismatch: {0} Hz vs {1} Hz")]
    FrequencyMismatch(f64, f64),

    #[error("missing coverage: {0}")]
    Coverage(String),

    #[error(
        "linear system is numerically singular (rank deficient Gram matrix); use a regularization sigma > 0"
    )]
    SingularSystem,

    #[error("training diverged at step {step}: {term} became non-finite")]
    Diverged { step: usize, term: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("model type mismatch: expected {expected}, found {found}")]
    ModelKind { expected: String, found: String },

    #[error("ingestion error for entry `{entry}`: {reason}")]
    Ingest { entry: String, reason: String },

    #[error("variant {variant}: {source}")]
    Variant {
        variant: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The innermost error, looking through per-variant annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Variant { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
