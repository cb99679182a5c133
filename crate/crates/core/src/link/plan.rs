use crate::error::{PicError, Result};
use crate::link::{Assembly, LinkAlgorithm};
use crate::model::attention_flops;
use crate::store::CacheId;

/// Token selection for one request, decided before any math runs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkPlan {
    pub algorithm: LinkAlgorithm,
    /// Assembled length N; assembled positions are `0..n`.
    pub n: usize,
    /// Indices recomputed in every layer, ascending. For CacheBlend this is
    /// only the mandatory part; the dynamic picks are added at execution.
    pub selected: Vec<usize>,
    /// CacheBlend only: how many cached tokens to add after layer 0.
    pub dynamic_target: Option<usize>,
}

impl LinkPlan {
    /// k' as known from the plan alone (CacheBlend counts its target).
    pub fn k_prime(&self) -> usize {
        self.selected.len() + self.dynamic_target.unwrap_or(0)
    }

    /// Per-layer attention FLOPs for plans whose selection is fixed up front.
    pub fn static_attention_flops(&self, hidden_dim: usize, num_layers: usize) -> Option<Vec<u64>> {
        if self.dynamic_target.is_some() {
            return None;
        }
        Some(vec![attention_flops(hidden_dim, &self.selected); num_layers])
    }
}

/// Shape of a prompt segment, enough to plan without touching the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentShape {
    Literal(usize),
    Cached { len: usize, dummy_prefix_dropped: usize },
}

struct Span {
    id: Option<CacheId>,
    start: usize,
    len: usize,
    dummy: usize,
}

pub fn plan(algorithm: LinkAlgorithm, assembly: &Assembly) -> Result<LinkPlan> {
    let spans: Vec<Span> = assembly
        .spans
        .iter()
        .map(|s| Span { id: Some(s.id), start: s.start, len: s.len, dummy: s.chunk.dummy_prefix_dropped })
        .collect();
    plan_spans(algorithm, assembly.len(), &assembly.literal_indices(), &spans)
}

/// Plans a request described only by segment lengths.
pub fn plan_for_shape(algorithm: LinkAlgorithm, shape: &[SegmentShape]) -> Result<LinkPlan> {
    let mut n = 0;
    let mut literal = Vec::new();
    let mut spans = Vec::new();
    for seg in shape {
        match *seg {
            SegmentShape::Literal(len) => {
                literal.extend(n..n + len);
                n += len;
            }
            SegmentShape::Cached { len, dummy_prefix_dropped } => {
                spans.push(Span { id: None, start: n, len, dummy: dummy_prefix_dropped });
                n += len;
            }
        }
    }
    plan_spans(algorithm, n, &literal, &spans)
}

fn plan_spans(algorithm: LinkAlgorithm, n: usize, literal: &[usize], spans: &[Span]) -> Result<LinkPlan> {
    if n == 0 {
        return Err(PicError::EmptyInput("empty assembly"));
    }
    let mut selected = vec![false; n];
    for &i in literal {
        selected[i] = true;
    }
    let mut dynamic_target = None;
    match algorithm {
        LinkAlgorithm::Naive => {}
        LinkAlgorithm::FullRecompute => selected.iter_mut().for_each(|s| *s = true),
        LinkAlgorithm::LegoLink { k } => {
            // a chunk at index 0 was compiled at exactly its link positions
            for span in spans.iter().filter(|s| s.start != 0) {
                for s in &mut selected[span.start..span.start + k.min(span.len)] {
                    *s = true;
                }
            }
        }
        LinkAlgorithm::LegoLink0 => {
            if let Some(span) = spans.iter().find(|s| s.dummy == 0) {
                let which = span.id.map_or_else(|| format!("at index {}", span.start), |id| id.to_string());
                return Err(PicError::VariantMismatch(format!(
                    "legolink0 needs chunks compiled with a dummy prefix; chunk {which} has none"
                )));
            }
        }
        LinkAlgorithm::CacheBlend { ratio_percent } => {
            if ratio_percent > 100 {
                return Err(PicError::InvalidAlgorithm(algorithm.to_string()));
            }
            let cached: u64 = spans.iter().map(|s| s.len as u64).sum();
            dynamic_target = Some((ratio_percent as u64 * cached).div_ceil(100) as usize);
        }
    }
    // The first generated token needs the last prompt row's hidden state.
    selected[n - 1] = true;

    let selected: Vec<usize> = (0..n).filter(|&i| selected[i]).collect();
    if let Some(target) = dynamic_target.as_mut() {
        *target = (*target).min(n - selected.len());
    }
    Ok(LinkPlan { algorithm, n, selected, dynamic_target })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_chunks_and_query() -> Vec<SegmentShape> {
        let c = SegmentShape::Cached { len: 48, dummy_prefix_dropped: 0 };
        vec![c, c, c, SegmentShape::Literal(16)]
    }

    #[test]
    fn legolink16_selects_chunk_heads_and_query() {
        let p = plan_for_shape(LinkAlgorithm::LegoLink { k: 16 }, &three_chunks_and_query()).unwrap();
        let expected: Vec<usize> = (48..64).chain(96..112).chain(144..160).collect();
        assert_eq!(p.selected, expected);
        assert_eq!(p.k_prime(), 48);
    }

    #[test]
    fn legolink_saturates_to_everything_but_first_chunk() {
        let p = plan_for_shape(LinkAlgorithm::LegoLink { k: 100 }, &three_chunks_and_query()).unwrap();
        assert_eq!(p.selected, (48..160).collect::<Vec<_>>());
    }

    #[test]
    fn first_chunk_exemption_needs_index_zero() {
        let shape = [
            SegmentShape::Literal(5),
            SegmentShape::Cached { len: 48, dummy_prefix_dropped: 0 },
            SegmentShape::Literal(3),
        ];
        let p = plan_for_shape(LinkAlgorithm::LegoLink { k: 4 }, &shape).unwrap();
        assert_eq!(p.selected, [0, 1, 2, 3, 4, 5, 6, 7, 8, 53, 54, 55]);
    }

    #[test]
    fn naive_selects_only_literals() {
        let shape = [SegmentShape::Cached { len: 48, dummy_prefix_dropped: 0 }, SegmentShape::Literal(16)];
        let p = plan_for_shape(LinkAlgorithm::Naive, &shape).unwrap();
        assert_eq!(p.selected, (48..64).collect::<Vec<_>>());
    }

    #[test]
    fn full_recompute_selects_all() {
        let p = plan_for_shape(LinkAlgorithm::FullRecompute, &three_chunks_and_query()).unwrap();
        assert_eq!(p.selected.len(), 160);
    }

    #[test]
    fn cacheblend_target_rounds_up() {
        let p = plan_for_shape(LinkAlgorithm::CacheBlend { ratio_percent: 15 }, &three_chunks_and_query()).unwrap();
        assert_eq!(p.selected.len(), 16);
        assert_eq!(p.dynamic_target, Some(22));
        assert_eq!(p.k_prime(), 38);
        assert!(p.static_attention_flops(64, 4).is_none());
    }

    #[test]
    fn legolink0_requires_dummy_prefix() {
        let err = plan_for_shape(LinkAlgorithm::LegoLink0, &three_chunks_and_query()).unwrap_err();
        assert!(matches!(err, PicError::VariantMismatch(_)));
        let c = SegmentShape::Cached { len: 48, dummy_prefix_dropped: 4 };
        let p = plan_for_shape(LinkAlgorithm::LegoLink0, &[c, c, SegmentShape::Literal(16)]).unwrap();
        assert_eq!(p.selected, (96..112).collect::<Vec<_>>());
    }

    #[test]
    fn trailing_cached_chunk_forces_last_row() {
        let shape = [SegmentShape::Literal(2), SegmentShape::Cached { len: 10, dummy_prefix_dropped: 0 }];
        let p = plan_for_shape(LinkAlgorithm::Naive, &shape).unwrap();
        assert_eq!(p.selected, [0, 1, 11]);
    }

    #[test]
    fn legolink_count_is_linear_in_chunks() {
        for chunks in 1..10 {
            let mut shape = vec![SegmentShape::Cached { len: 512, dummy_prefix_dropped: 0 }; chunks];
            shape.push(SegmentShape::Literal(16));
            let p = plan_for_shape(LinkAlgorithm::LegoLink { k: 16 }, &shape).unwrap();
            assert_eq!(p.selected.len(), 16 * (chunks - 1) + 16);
        }
    }
}
