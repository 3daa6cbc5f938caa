//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("non-finite value produced by layer {layer_index} ({layer})")]
    NonFinite { layer_index: usize, layer: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter vector length mismatch: expected {expected}, got {got}")]
    ParamLength { expected: usize, got: usize },

    #[error("bad IDX magic in {path}: expected {expected:#010x}, got {got:#010x}")]
    IdxBadMagic {
        path: String,
        expected: u32,
        got: u32,
    },

    #[error("truncated IDX file {path}: needed {needed} bytes, got {got}")]
    IdxTruncated {
        path: String,
        needed: usize,
        got: usize,
    },

    #[error("IDX image/label count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("partition error: {0}")]
    Partition(String),

    #[error("clustering error: {0}")]
    Clustering(String),

    #[error("{stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an error with the name of the pipeline stage it occurred in.
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }

    pub fn io(path: &std::path::Path, source: std::io::Error) -> Error {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
