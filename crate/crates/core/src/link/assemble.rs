use std::sync::Arc;

use crate::error::{PicError, Result};
use crate::model::{check_tokens, TokenId, Weights};
use crate::store::{CacheId, KvChunk, KvStore};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PromptSegment {
    Literal(Vec<TokenId>),
    Cached(CacheId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenSource {
    Fresh,
    /// Row `row` of `spans[span]`.
    Cached { span: usize, row: usize },
}

/// A cached chunk placed at `start..start + len` of the assembled prompt,
/// together with the snapshot fetched from the store.
#[derive(Debug, Clone)]
pub struct ChunkSpan {
    pub id: CacheId,
    pub start: usize,
    pub len: usize,
    pub chunk: Arc<KvChunk>,
}

/// A request with every cache reference resolved. Holding an assembly keeps
/// its chunks alive even if they are expired meanwhile.
#[derive(Debug, Clone)]
pub struct Assembly {
    pub tokens: Vec<TokenId>,
    pub sources: Vec<TokenSource>,
    pub spans: Vec<ChunkSpan>,
}

impl Assembly {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// `(start, len)` of every cached chunk.
    pub fn boundaries(&self) -> Vec<(usize, usize)> {
        self.spans.iter().map(|s| (s.start, s.len)).collect()
    }

    pub fn literal_indices(&self) -> Vec<usize> {
        self.sources
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(s, TokenSource::Fresh))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn cached_token_count(&self) -> usize {
        self.spans.iter().map(|s| s.len).sum()
    }
}

pub fn assemble(weights: &Weights, store: &KvStore, segments: &[PromptSegment]) -> Result<Assembly> {
    let cfg = weights.config();
    let mut out = Assembly { tokens: Vec::new(), sources: Vec::new(), spans: Vec::new() };
    for seg in segments {
        match seg {
            PromptSegment::Literal(tokens) => {
                if tokens.is_empty() {
                    return Err(PicError::EmptyInput("literal segment has no tokens"));
                }
                check_tokens(weights, tokens)?;
                out.tokens.extend_from_slice(tokens);
                out.sources.extend(std::iter::repeat_n(TokenSource::Fresh, tokens.len()));
            }
            PromptSegment::Cached(id) => {
                let chunk = store.get(*id)?;
                if chunk.model_fingerprint != weights.fingerprint() {
                    return Err(PicError::FingerprintMismatch {
                        id: *id,
                        expected: weights.fingerprint(),
                        found: chunk.model_fingerprint,
                    });
                }
                if chunk.layers.len() != cfg.num_layers || chunk.hidden_dim() != cfg.hidden_dim {
                    return Err(PicError::Shape(format!(
                        "chunk {id} has {} layers of width {}",
                        chunk.layers.len(),
                        chunk.hidden_dim()
                    )));
                }
                let span = out.spans.len();
                let start = out.tokens.len();
                out.tokens.extend_from_slice(&chunk.tokens);
                out.sources.extend((0..chunk.token_count()).map(|row| TokenSource::Cached { span, row }));
                out.spans.push(ChunkSpan { id: *id, start, len: chunk.token_count(), chunk });
            }
        }
    }
    if out.tokens.is_empty() {
        return Err(PicError::EmptyInput("request has no segments"));
    }
    if out.tokens.len() > cfg.max_position {
        return Err(PicError::Capacity(format!(
            "assembled prompt of {} tokens exceeds max_position {}",
            out.tokens.len(),
            cfg.max_position
        )));
    }
    Ok(out)
}
