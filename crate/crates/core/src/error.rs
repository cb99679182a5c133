use std::path::PathBuf;

use crate::store::CacheId;

pub type Result<T, E = PicError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum PicError {
    #[error("invalid model configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("invalid layout: {0}")]
    Layout(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("cache id {0} is unknown or expired")]
    MissingCache(CacheId),

    #[error("chunk {id} was compiled for model {found:016x}, this model is {expected:016x}")]
    FingerprintMismatch {
        id: CacheId,
        expected: u64,
        found: u64,
    },

    #[error("variant mismatch: {0}")]
    VariantMismatch(String),

    #[error("invalid algorithm selector {0:?} (expected naive | fr | cacheblend:R | legolink:K | legolink0)")]
    InvalidAlgorithm(String),

    #[error("invalid chunk spec {0:?} (expected fixed:N or delimiter:BYTE)")]
    InvalidChunkSpec(String),

    #[error("{what} {index} out of range (limit {limit})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("chunk {index}: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<PicError>,
    },

    #[error("bad file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
