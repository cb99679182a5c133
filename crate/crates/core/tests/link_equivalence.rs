use pic_core::compile::{compile_batch, CompileVariant};
use pic_core::link::{assemble, link_execute, plan, serve_request, Instrumentation, LinkAlgorithm, PromptSegment};
use pic_core::model::{argmax, decode, full_prefill, init_model, ModelConfig, TokenId, Weights};
use pic_core::serving::synthetic_cases;
use pic_core::store::{KvStore, StoreConfig};
use pic_core::PicError;

fn setup() -> (Weights, KvStore, tempfile::TempDir) {
    let w = init_model(&ModelConfig::new(4, 64, 4, 7)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = KvStore::open(StoreConfig::new(64 << 20, dir.path())).unwrap();
    (w, store, dir)
}

fn max_abs_diff(a: &[f32], b: &[f32]) -> f32 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f32::max)
}

fn greedy_from_prefill(w: &Weights, prompt: &[TokenId], steps: usize) -> Vec<TokenId> {
    let p = full_prefill(w, prompt, false).unwrap();
    let mut next = argmax(&p.logits);
    let mut state = p.into_state();
    let mut out = Vec::new();
    for _ in 0..steps {
        out.push(next);
        let pos = state.len();
        next = argmax(&decode(w, &mut state, next, pos).unwrap());
    }
    out
}

fn link_logits(w: &Weights, store: &KvStore, segs: &[PromptSegment], alg: LinkAlgorithm) -> Vec<f32> {
    let asm = assemble(w, store, segs).unwrap();
    let p = plan(alg, &asm).unwrap();
    link_execute(w, &asm, &p, Instrumentation::default()).unwrap().logits
}

#[test]
fn full_recompute_matches_prefill_on_random_assemblies() {
    let (w, store, _dir) = setup();
    for case in synthetic_cases(1, 5, 3, 48, 16) {
        let ids = compile_batch(&w, &store, &case.chunks, CompileVariant::Standard).unwrap();
        let segs = case.segments(&ids);
        let prompt: Vec<TokenId> = case.chunks.concat().into_iter().chain(case.query.clone()).collect();
        let oracle = full_prefill(&w, &prompt, false).unwrap();
        let fr = link_logits(&w, &store, &segs, LinkAlgorithm::FullRecompute);
        assert!(max_abs_diff(&fr, &oracle.logits) <= 1e-4);
        let served = serve_request(&w, &store, &segs, LinkAlgorithm::FullRecompute, 8).unwrap();
        let expected: Vec<_> = greedy_from_prefill(&w, &prompt, 8)
            .into_iter()
            .take_while(|&t| t != pic_core::model::tokenizer::EOS)
            .collect();
        assert_eq!(served.tokens, expected);
    }
}

#[test]
fn saturated_legolink_matches_full_recompute() {
    let (w, store, _dir) = setup();
    for case in synthetic_cases(2, 3, 3, 48, 16) {
        let ids = compile_batch(&w, &store, &case.chunks, CompileVariant::Standard).unwrap();
        let segs = case.segments(&ids);
        let fr = link_logits(&w, &store, &segs, LinkAlgorithm::FullRecompute);
        let lego = link_logits(&w, &store, &segs, LinkAlgorithm::LegoLink { k: 48 });
        assert!(max_abs_diff(&fr, &lego) <= 1e-4);
    }
}

#[test]
fn naive_reuse_departs_from_the_oracle() {
    let (w, store, _dir) = setup();
    let case = &synthetic_cases(3, 1, 3, 48, 16)[0];
    let ids = compile_batch(&w, &store, &case.chunks, CompileVariant::Standard).unwrap();
    let segs = case.segments(&ids);
    let fr = link_logits(&w, &store, &segs, LinkAlgorithm::FullRecompute);
    let naive = link_logits(&w, &store, &segs, LinkAlgorithm::Naive);
    let lego = link_logits(&w, &store, &segs, LinkAlgorithm::LegoLink { k: 16 });
    // stale positions in chunks 2 and 3 change the answer; partial repair
    // should not make it worse than doing nothing
    assert!(max_abs_diff(&fr, &naive) > 1e-3);
    assert!(max_abs_diff(&fr, &lego) <= max_abs_diff(&fr, &naive) * 1.5);
}

#[test]
fn leading_chunk_is_exact_under_every_algorithm() {
    let (w, store, _dir) = setup();
    let case = &synthetic_cases(4, 1, 1, 48, 16)[0];
    let ids = compile_batch(&w, &store, &case.chunks, CompileVariant::Standard).unwrap();
    let segs = case.segments(&ids);
    let prompt: Vec<TokenId> = case.chunks.concat().into_iter().chain(case.query.clone()).collect();
    let oracle = full_prefill(&w, &prompt, false).unwrap().logits;
    for alg in ["naive", "legolink:16", "cacheblend:15", "fr"] {
        let got = link_logits(&w, &store, &segs, alg.parse().unwrap());
        assert!(max_abs_diff(&got, &oracle) <= 1e-4, "{alg}");
    }
}

#[test]
fn segments_in_any_order() {
    let (w, store, _dir) = setup();
    let case = &synthetic_cases(5, 1, 2, 32, 8)[0];
    let ids = compile_batch(&w, &store, &case.chunks, CompileVariant::Standard).unwrap();
    let segs = vec![
        PromptSegment::Literal(vec![1, 2, 3]),
        PromptSegment::Cached(ids[1]),
        PromptSegment::Cached(ids[0]),
        PromptSegment::Literal(case.query.clone()),
    ];
    let prompt: Vec<TokenId> = [vec![1, 2, 3], case.chunks[1].clone(), case.chunks[0].clone(), case.query.clone()].concat();
    let oracle = full_prefill(&w, &prompt, false).unwrap().logits;
    let fr = link_logits(&w, &store, &segs, LinkAlgorithm::FullRecompute);
    assert!(max_abs_diff(&fr, &oracle) <= 1e-4);

    let asm = assemble(&w, &store, &segs).unwrap();
    let p = plan(LinkAlgorithm::LegoLink { k: 4 }, &asm).unwrap();
    // 3 + 8 literals, 4 from each cached chunk (neither starts at index 0)
    assert_eq!(p.selected.len(), 3 + 8 + 4 + 4);
    let out = link_execute(&w, &asm, &p, Instrumentation::default()).unwrap();
    assert_eq!(out.stats.k_prime, p.selected.len());
}

#[test]
fn legolink0_recomputes_only_literals() {
    let (w, store, _dir) = setup();
    let case = &synthetic_cases(6, 1, 3, 48, 16)[0];
    let ids = compile_batch(&w, &store, &case.chunks, CompileVariant::DummyPrefix(4)).unwrap();
    let asm = assemble(&w, &store, &case.segments(&ids)).unwrap();
    let p = plan(LinkAlgorithm::LegoLink0, &asm).unwrap();
    assert_eq!(p.selected, (144..160).collect::<Vec<_>>());
    let out = link_execute(&w, &asm, &p, Instrumentation::default()).unwrap();
    assert_eq!(out.stats.recomputed_tokens_per_layer, vec![16; 4]);

    let plain = compile_batch(&w, &store, &case.chunks, CompileVariant::Standard).unwrap();
    let asm = assemble(&w, &store, &case.segments(&plain)).unwrap();
    assert!(matches!(plan(LinkAlgorithm::LegoLink0, &asm), Err(PicError::VariantMismatch(_))));
}

#[test]
fn cacheblend_recomputes_everything_then_a_fixed_share() {
    let (w, store, _dir) = setup();
    let case = &synthetic_cases(7, 1, 3, 48, 16)[0];
    let ids = compile_batch(&w, &store, &case.chunks, CompileVariant::Standard).unwrap();
    let asm = assemble(&w, &store, &case.segments(&ids)).unwrap();
    let p = plan(LinkAlgorithm::CacheBlend { ratio_percent: 15 }, &asm).unwrap();
    let out = link_execute(&w, &asm, &p, Instrumentation::default()).unwrap();
    assert_eq!(out.stats.recomputed_tokens_per_layer, vec![160, 38, 38, 38]);
    assert_eq!(out.stats.k_prime, 38);
    assert!((144..160).all(|i| out.selected.contains(&i)));
}

#[test]
fn expired_chunk_survives_in_a_held_assembly() {
    let (w, store, _dir) = setup();
    let case = &synthetic_cases(8, 1, 2, 16, 4)[0];
    let ids = compile_batch(&w, &store, &case.chunks, CompileVariant::Standard).unwrap();
    let segs = case.segments(&ids);
    let asm = assemble(&w, &store, &segs).unwrap();
    assert!(store.expire(ids[0]).unwrap().removed());
    let p = plan(LinkAlgorithm::LegoLink { k: 4 }, &asm).unwrap();
    link_execute(&w, &asm, &p, Instrumentation::default()).unwrap();
    assert!(matches!(
        serve_request(&w, &store, &segs, LinkAlgorithm::Naive, 1),
        Err(PicError::MissingCache(id)) if id == ids[0]
    ));
}

#[test]
fn foreign_model_chunks_rejected() {
    let (w, store, _dir) = setup();
    let other = init_model(&ModelConfig::new(4, 64, 4, 8)).unwrap();
    let ids = compile_batch(&other, &store, &[vec![5; 8]], CompileVariant::Standard).unwrap();
    let err = serve_request(&w, &store, &[PromptSegment::Cached(ids[0])], LinkAlgorithm::Naive, 1).unwrap_err();
    assert!(matches!(err, PicError::FingerprintMismatch { .. }));
}
