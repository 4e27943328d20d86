use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid label {label} at position {index} (expected 0 or 1)")]
    InvalidLabel { index: usize, label: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("budget of {target} synapses exceeds the {available} active synapses of the ancestor")]
    BudgetExceedsAncestor { target: u64, available: u64 },

    #[error("undefined metrics: confusion counts are all zero")]
    EmptyConfusion,

    #[error("checkpoint {path}: bad magic {found:?}")]
    BadMagic { path: PathBuf, found: [u8; 4] },

    #[error("checkpoint {path}: unsupported format version {found} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u16,
        expected: u16,
    },

    #[error("checkpoint {path}: checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum {
        path: PathBuf,
        stored: u32,
        computed: u32,
    },

    #[error("checkpoint {path}: malformed body: {reason}")]
    MalformedCheckpoint { path: PathBuf, reason: String },

    #[error("{path}: {reason}")]
    Input { path: PathBuf, reason: String },

    #[error("missing generation-{generation} network for fold {fold}")]
    MissingGeneration { fold: usize, generation: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
