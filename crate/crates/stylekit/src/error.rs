use std::path::PathBuf;

use instyle_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum StylekitError {
    #[error("patch contrastive loss needs at least 2 locations, got {0}")]
    TooFewLocations(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty instance mask for {0}")]
    EmptyMask(String),
    #[error("no training pairs for class {0}")]
    NoPairs(String),
    #[error("pair {pair} has no instance of class {expected}")]
    ClassMismatch { pair: String, expected: String },
    #[error("non-finite {term} loss at step {step}; snapshot written to {snapshot:?}")]
    NonFinite {
        term: &'static str,
        step: u64,
        snapshot: Option<PathBuf>,
    },
    #[error("weights file {path}: {reason}")]
    Weights { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("writing loss history: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl StylekitError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
