//! Values frozen from a reference run. A change here means the model, the
//! tokenizer or the RNG stream changed, and every stored cache is stale.

use pic_core::chunker::{split, ChunkSpec};
use pic_core::link::{plan_for_shape, LinkAlgorithm, SegmentShape};
use pic_core::model::{argmax, full_prefill, init_model, tokenizer, ModelConfig};

#[test]
fn default_weights_checksum() {
    let w = init_model(&ModelConfig::new(4, 64, 4, 7)).unwrap();
    assert_eq!(w.checksum(), 0x04d2_e025_5191_802d);
    assert_eq!(w.fingerprint(), 0xd90b_716e_86cf_b45f);
    assert_eq!(init_model(&ModelConfig::default()).unwrap().checksum(), w.checksum());
}

#[test]
fn greedy_token_for_fixed_prompt() {
    let w = init_model(&ModelConfig::new(4, 64, 4, 7)).unwrap();
    let p = full_prefill(&w, &tokenizer::encode("hello world"), false).unwrap();
    assert_eq!(argmax(&p.logits), 95);
    assert!((p.logits[0] - 0.567_237_4).abs() < 1e-5);
}

#[test]
fn fixed_chunking_of_1300_tokens() {
    let tokens = vec![7u32; 1300];
    let sizes: Vec<usize> = split(&tokens, ChunkSpec::Fixed(512)).unwrap().iter().map(Vec::len).collect();
    assert_eq!(sizes, [512, 512, 276]);
}

#[test]
fn plan_sizes_for_three_chunks_and_a_query() {
    let shape = [
        SegmentShape::Cached { len: 48, dummy_prefix_dropped: 0 },
        SegmentShape::Cached { len: 48, dummy_prefix_dropped: 0 },
        SegmentShape::Cached { len: 48, dummy_prefix_dropped: 0 },
        SegmentShape::Literal(16),
    ];
    let lego = plan_for_shape(LinkAlgorithm::LegoLink { k: 16 }, &shape).unwrap();
    assert_eq!(lego.selected.len(), 48);
    let blend = plan_for_shape(LinkAlgorithm::CacheBlend { ratio_percent: 15 }, &shape).unwrap();
    assert_eq!(blend.k_prime(), 38);
    assert_eq!(plan_for_shape(LinkAlgorithm::FullRecompute, &shape).unwrap().k_prime(), 160);
}
