use std::fmt;
use std::ops::Range;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{PicError, Result};
use crate::model::{LayerKv, TokenId};

/// Opaque cache handle handed out by the store. Never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct CacheId(pub u64);

impl fmt::Display for CacheId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Compiled KV of one immutable chunk. Immutable once stored.
#[derive(Debug, Clone, PartialEq)]
pub struct KvChunk {
    pub tokens: Vec<TokenId>,
    pub layers: Vec<LayerKv>,
    /// Number of leading dummy tokens whose rows were discarded at compile time.
    /// Stored rows were computed at positions `dummy_prefix_dropped..`.
    pub dummy_prefix_dropped: usize,
    pub model_fingerprint: u64,
}

impl KvChunk {
    pub fn token_count(&self) -> usize {
        self.tokens.len()
    }

    pub fn compile_positions(&self) -> Range<usize> {
        self.dummy_prefix_dropped..self.dummy_prefix_dropped + self.tokens.len()
    }

    pub fn hidden_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.dim)
    }

    /// Payload bytes of all K/V matrices.
    pub fn footprint_bytes(&self) -> usize {
        self.layers.iter().map(LayerKv::byte_len).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(PicError::EmptyInput("chunk has no tokens"));
        }
        if self.layers.is_empty() {
            return Err(PicError::Shape("chunk has no layers".into()));
        }
        let dim = self.hidden_dim();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            if layer.layer_index != i || layer.dim != dim {
                return Err(PicError::Shape(format!(
                    "layer slot {i} holds layer {} of width {} (expected width {dim})",
                    layer.layer_index, layer.dim
                )));
            }
            if layer.rows() != self.tokens.len() {
                return Err(PicError::Shape(format!(
                    "layer {i} has {} rows for {} tokens",
                    layer.rows(),
                    self.tokens.len()
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 over tokens, metadata and K/V payload, truncated to 64 bits.
    pub fn checksum(&self) -> u64 {
        let mut h = Sha256::new();
        h.update((self.dummy_prefix_dropped as u64).to_le_bytes());
        h.update(self.model_fingerprint.to_le_bytes());
        for t in &self.tokens {
            h.update(t.to_le_bytes());
        }
        for l in &self.layers {
            for v in l.keys.iter().chain(&l.values) {
                h.update(v.to_le_bytes());
            }
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("sha256 has 32 bytes"))
    }
}

pub(crate) const MAGIC: &[u8; 8] = b"PICKV001";
/// magic, cache_id, layers, token_count, d, fingerprint, dummy_prefix_dropped
pub(crate) const HEADER_LEN: usize = 8 + 8 + 4 + 4 + 4 + 8 + 4;

pub(crate) struct Header {
    pub id: CacheId,
    pub layers: usize,
    pub token_count: usize,
    pub dim: usize,
    pub fingerprint: u64,
    pub dummy: usize,
}

impl Header {
    pub fn footprint_bytes(&self) -> usize {
        self.layers * self.token_count * self.dim * 2 * std::mem::size_of::<f32>()
    }
}

/// Layout: header, token ids (u32), then per layer K rows followed by V rows.
/// Everything little-endian.
pub(crate) fn encode(id: CacheId, chunk: &KvChunk) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + chunk.tokens.len() * 4 + chunk.footprint_bytes());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&id.0.to_le_bytes());
    out.extend_from_slice(&(chunk.layers.len() as u32).to_le_bytes());
    out.extend_from_slice(&(chunk.tokens.len() as u32).to_le_bytes());
    out.extend_from_slice(&(chunk.hidden_dim() as u32).to_le_bytes());
    out.extend_from_slice(&chunk.model_fingerprint.to_le_bytes());
    out.extend_from_slice(&(chunk.dummy_prefix_dropped as u32).to_le_bytes());
    for t in &chunk.tokens {
        out.extend_from_slice(&t.to_le_bytes());
    }
    for layer in &chunk.layers {
        for v in layer.keys.iter().chain(&layer.values) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], off: usize) -> u64 {
    u64::from_le_bytes(b[off..off + 8].try_into().unwrap())
}

pub(crate) fn decode_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let err = |reason: &str| PicError::Format { path: path.to_owned(), reason: reason.to_owned() };
    if bytes.len() < HEADER_LEN {
        return Err(err("truncated header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(err("bad magic"));
    }
    Ok(Header {
        id: CacheId(u64_at(bytes, 8)),
        layers: u32_at(bytes, 16) as usize,
        token_count: u32_at(bytes, 20) as usize,
        dim: u32_at(bytes, 24) as usize,
        fingerprint: u64_at(bytes, 28),
        dummy: u32_at(bytes, 36) as usize,
    })
}

pub(crate) fn decode(bytes: &[u8], path: &Path) -> Result<(CacheId, KvChunk)> {
    let header = decode_header(bytes, path)?;
    let n = header.token_count;
    let per_matrix = n * header.dim;
    let expected = HEADER_LEN + n * 4 + header.layers * per_matrix * 2 * 4;
    if bytes.len() != expected {
        return Err(PicError::Format {
            path: path.to_owned(),
            reason: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    let mut off = HEADER_LEN;
    let tokens = (0..n).map(|i| u32_at(bytes, off + 4 * i)).collect();
    off += 4 * n;
    let mut floats = |count: usize| -> Vec<f32> {
        let v = bytes[off..off + count * 4]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        off += count * 4;
        v
    };
    let layers = (0..header.layers)
        .map(|l| {
            let keys = floats(per_matrix);
            let values = floats(per_matrix);
            LayerKv { layer_index: l, dim: header.dim, keys, values }
        })
        .collect();
    let chunk = KvChunk {
        tokens,
        layers,
        dummy_prefix_dropped: header.dummy,
        model_fingerprint: header.fingerprint,
    };
    chunk.validate()?;
    Ok((header.id, chunk))
}
