use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("dimension mismatch for record {record} (line {line}): source `{tag}` has dim {found}, expected {expected}")]
    DimensionMismatch {
        record: String,
        line: usize,
        tag: String,
        expected: usize,
        found: usize,
    },

    #[error("duplicate item_id `{0}`")]
    DuplicateItem(String),

    #[error("missing item `{0}`")]
    MissingItem(String),

    #[error("item `{item}` has no vector for source `{tag}`")]
    MissingSource { item: String, tag: String },

    #[error("not enough identities: {0}")]
    InsufficientIdentities(String),

    #[error("zero vector cannot be normalized")]
    ZeroVector,

    #[error("vector is not unit norm (norm = {0})")]
    NotUnitNorm(f64),

    #[error("tape output is {rows}x{cols}, expected a scalar")]
    NonScalarOutput { rows: usize, cols: usize },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("protocol mismatch: system `{system}` has protocol {found}, expected {expected}")]
    ProtocolMismatch {
        system: String,
        expected: String,
        found: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
