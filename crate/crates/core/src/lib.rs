//! Position-independent KV caching for a small deterministic transformer.
//!
//! Chunks are compiled once (prefilled from position 0) into a [`KvStore`];
//! requests reference them by [`CacheId`] in any order, and the link step
//! repairs the spliced KV by recomputing a selected subset of tokens before
//! decoding.

pub mod analysis;
pub mod chunker;
pub mod compile;
pub mod error;
pub mod link;
pub mod model;
pub mod serving;
pub mod store;

pub use chunker::{split, ChunkSpec};
pub use compile::{compile_batch, compile_chunk, CompileVariant};
pub use error::{PicError, Result};
pub use link::{serve_request, LinkAlgorithm, LinkPlan, PromptSegment, ServeOutput};
pub use model::{init_model, ModelConfig, TokenId, Weights};
pub use serving::RequestMetrics;
pub use store::{CacheId, KvChunk, KvStore, StoreConfig};
