//! Compile step: prefill each immutable chunk on its own, starting at position
//! zero, and persist its KV.

use std::fmt;
use std::str::FromStr;

use crate::error::{PicError, Result};
use crate::model::{full_prefill, tokenizer, LayerKv, TokenId, Weights};
use crate::store::{CacheId, KvChunk, KvStore};

pub const DEFAULT_DUMMY_PREFIX: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CompileVariant {
    #[default]
    Standard,
    /// Prepend this many BOS tokens, prefill, then drop their rows.
    DummyPrefix(usize),
}

impl FromStr for CompileVariant {
    type Err = PicError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(Self::Standard),
            "dummy_prefix" => Ok(Self::DummyPrefix(DEFAULT_DUMMY_PREFIX)),
            _ => s
                .strip_prefix("dummy_prefix:")
                .and_then(|m| m.parse().ok())
                .map(Self::DummyPrefix)
                .ok_or_else(|| PicError::VariantMismatch(format!("unknown compile variant {s:?}"))),
        }
    }
}

impl fmt::Display for CompileVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Standard => f.write_str("standard"),
            Self::DummyPrefix(m) => write!(f, "dummy_prefix:{m}"),
        }
    }
}

/// Builds the chunk payload without storing it.
pub fn compile_payload(weights: &Weights, chunk_tokens: &[TokenId], variant: CompileVariant) -> Result<KvChunk> {
    if chunk_tokens.is_empty() {
        return Err(PicError::EmptyInput("chunk has no tokens"));
    }
    let dummies = match variant {
        CompileVariant::Standard => 0,
        CompileVariant::DummyPrefix(m) => m,
    };
    let max = weights.config().max_position;
    if chunk_tokens.len() + dummies > max {
        return Err(PicError::Capacity(format!(
            "chunk of {} tokens (+{dummies} dummies) exceeds max_position {max}",
            chunk_tokens.len()
        )));
    }
    let mut input = vec![tokenizer::BOS; dummies];
    input.extend_from_slice(chunk_tokens);
    let prefill = full_prefill(weights, &input, false)?;
    let d = weights.config().hidden_dim;
    let layers = prefill
        .kv
        .into_iter()
        .map(|mut l| {
            l.keys.drain(..dummies * d);
            l.values.drain(..dummies * d);
            LayerKv { layer_index: l.layer_index, dim: d, keys: l.keys, values: l.values }
        })
        .collect();
    Ok(KvChunk {
        tokens: chunk_tokens.to_vec(),
        layers,
        dummy_prefix_dropped: dummies,
        model_fingerprint: weights.fingerprint(),
    })
}

pub fn compile_chunk(
    weights: &Weights,
    store: &KvStore,
    chunk_tokens: &[TokenId],
    variant: CompileVariant,
) -> Result<CacheId> {
    store.put(compile_payload(weights, chunk_tokens, variant)?)
}

/// Compiles every chunk in order. All chunks are validated before any is
/// stored, so a bad chunk leaves the store untouched.
pub fn compile_batch(
    weights: &Weights,
    store: &KvStore,
    chunks: &[Vec<TokenId>],
    variant: CompileVariant,
) -> Result<Vec<CacheId>> {
    let max = weights.config().max_position;
    let dummies = match variant {
        CompileVariant::Standard => 0,
        CompileVariant::DummyPrefix(m) => m,
    };
    for (index, c) in chunks.iter().enumerate() {
        let problem = if c.is_empty() {
            Some(PicError::EmptyInput("chunk has no tokens"))
        } else if c.len() + dummies > max {
            Some(PicError::Capacity(format!("chunk of {} tokens exceeds max_position {max}", c.len())))
        } else {
            None
        };
        if let Some(source) = problem {
            return Err(PicError::Batch { index, source: Box::new(source) });
        }
    }
    chunks
        .iter()
        .enumerate()
        .map(|(index, c)| {
            compile_chunk(weights, store, c, variant).map_err(|e| PicError::Batch { index, source: Box::new(e) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{init_model, ModelConfig};
    use crate::store::StoreConfig;

    fn setup() -> (Weights, tempfile::TempDir, KvStore) {
        let w = init_model(&ModelConfig::new(2, 32, 2, 3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let s = KvStore::open(StoreConfig::new(1 << 24, dir.path())).unwrap();
        (w, dir, s)
    }

    fn toks(n: usize, salt: u32) -> Vec<TokenId> {
        (0..n as u32).map(|i| (i * 7 + salt) % 256).collect()
    }

    #[test]
    fn standard_compile_positions() {
        let (w, _d, s) = setup();
        let id = compile_chunk(&w, &s, &toks(48, 1), CompileVariant::Standard).unwrap();
        let c = s.get(id).unwrap();
        assert_eq!(c.compile_positions(), 0..48);
        assert!(c.layers.iter().all(|l| l.rows() == 48));
    }

    #[test]
    fn dummy_prefix_rows_match_prefill_tail() {
        let (w, _d, s) = setup();
        let chunk = toks(48, 2);
        let id = compile_chunk(&w, &s, &chunk, CompileVariant::DummyPrefix(4)).unwrap();
        let c = s.get(id).unwrap();
        assert_eq!(c.compile_positions(), 4..52);
        assert_eq!(c.dummy_prefix_dropped, 4);
        let mut with_dummies = vec![tokenizer::BOS; 4];
        with_dummies.extend_from_slice(&chunk);
        let full = full_prefill(&w, &with_dummies, false).unwrap();
        for (stored, reference) in c.layers.iter().zip(&full.kv) {
            assert_eq!(stored.keys, reference.keys[4 * 32..]);
            assert_eq!(stored.values, reference.values[4 * 32..]);
        }
    }

    #[test]
    fn same_chunk_twice_distinct_ids_same_payload() {
        let (w, _d, s) = setup();
        let a = compile_chunk(&w, &s, &toks(20, 3), CompileVariant::Standard).unwrap();
        let b = compile_chunk(&w, &s, &toks(20, 3), CompileVariant::Standard).unwrap();
        assert_ne!(a, b);
        assert_eq!(s.get(a).unwrap().checksum(), s.get(b).unwrap().checksum());
    }

    #[test]
    fn batch_matches_sequential() {
        let (w, _d, s) = setup();
        let chunks = vec![toks(10, 1), toks(12, 2), toks(9, 3)];
        let ids = compile_batch(&w, &s, &chunks, CompileVariant::Standard).unwrap();
        assert_eq!(ids.len(), 3);
        assert!(ids.windows(2).all(|p| p[0] < p[1]));
        for (id, c) in ids.iter().zip(&chunks) {
            let seq = compile_payload(&w, c, CompileVariant::Standard).unwrap();
            assert_eq!(s.get(*id).unwrap().checksum(), seq.checksum());
        }
    }

    #[test]
    fn batch_names_empty_chunk() {
        let (w, _d, s) = setup();
        let err = compile_batch(&w, &s, &[toks(4, 1), vec![], toks(4, 2)], CompileVariant::Standard).unwrap_err();
        assert!(matches!(err, PicError::Batch { index: 1, .. }), "{err}");
        assert_eq!(s.stats().live_chunks, 0);
    }

    #[test]
    fn too_long_chunk_is_capacity_error() {
        let w = init_model(&ModelConfig::new(1, 16, 2, 3).with_max_position(16)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let s = KvStore::open(StoreConfig::new(1 << 20, dir.path())).unwrap();
        assert!(matches!(
            compile_chunk(&w, &s, &toks(14, 0), CompileVariant::DummyPrefix(4)),
            Err(PicError::Capacity(_))
        ));
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("standard".parse::<CompileVariant>().unwrap(), CompileVariant::Standard);
        assert_eq!("dummy_prefix:4".parse::<CompileVariant>().unwrap(), CompileVariant::DummyPrefix(4));
        assert!("prefix".parse::<CompileVariant>().is_err());
    }
}
