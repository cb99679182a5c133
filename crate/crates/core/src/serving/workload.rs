use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::compile::{CompileVariant, DEFAULT_DUMMY_PREFIX};
use crate::link::{LinkAlgorithm, PromptSegment, SegmentShape};
use crate::model::TokenId;
use crate::store::CacheId;

/// One test case: immutable chunks followed by a query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Case {
    pub chunks: Vec<Vec<TokenId>>,
    pub query: Vec<TokenId>,
}

impl Case {
    /// Cached chunks in order, then the query.
    pub fn segments(&self, ids: &[CacheId]) -> Vec<PromptSegment> {
        let mut segs: Vec<_> = ids.iter().map(|&id| PromptSegment::Cached(id)).collect();
        if !self.query.is_empty() {
            segs.push(PromptSegment::Literal(self.query.clone()));
        }
        segs
    }

    pub fn shape(&self, variant: CompileVariant) -> Vec<SegmentShape> {
        let dummy = match variant {
            CompileVariant::Standard => 0,
            CompileVariant::DummyPrefix(m) => m,
        };
        let mut out: Vec<_> = self
            .chunks
            .iter()
            .map(|c| SegmentShape::Cached { len: c.len(), dummy_prefix_dropped: dummy })
            .collect();
        if !self.query.is_empty() {
            out.push(SegmentShape::Literal(self.query.len()));
        }
        out
    }

    pub fn prompt_len(&self) -> usize {
        self.chunks.iter().map(Vec::len).sum::<usize>() + self.query.len()
    }
}

/// LegoLink-0 needs dummy-prefixed chunks; everything else compiles plainly.
pub fn compile_variant_for(algorithm: LinkAlgorithm) -> CompileVariant {
    match algorithm {
        LinkAlgorithm::LegoLink0 => CompileVariant::DummyPrefix(DEFAULT_DUMMY_PREFIX),
        _ => CompileVariant::Standard,
    }
}

/// Seeded random byte-token cases.
pub fn synthetic_cases(
    seed: u64,
    cases: usize,
    chunks_per_case: usize,
    chunk_len: usize,
    query_len: usize,
) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tokens = |n: usize| -> Vec<TokenId> { (0..n).map(|_| rng.random_range(0..256)).collect() };
    (0..cases)
        .map(|_| Case {
            chunks: (0..chunks_per_case).map(|_| tokens(chunk_len)).collect(),
            query: tokens(query_len),
        })
        .collect()
}
