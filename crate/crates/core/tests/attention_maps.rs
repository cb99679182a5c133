use pic_core::analysis::{dump_attention, sink_score, MapRows};
use pic_core::compile::{compile_batch, CompileVariant};
use pic_core::link::LinkAlgorithm;
use pic_core::model::{argmax, init_model, ModelConfig, Weights};
use pic_core::serving::synthetic_cases;
use pic_core::store::{KvStore, StoreConfig};
use pic_core::PicError;

fn setup() -> (Weights, KvStore, tempfile::TempDir, Vec<pic_core::PromptSegment>) {
    let w = init_model(&ModelConfig::new(4, 64, 4, 7)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = KvStore::open(StoreConfig::new(64 << 20, dir.path())).unwrap();
    let case = synthetic_cases(11, 1, 3, 48, 16).remove(0);
    let ids = compile_batch(&w, &store, &case.chunks, CompileVariant::Standard).unwrap();
    let segs = case.segments(&ids);
    (w, store, dir, segs)
}

#[test]
fn decoded_maps_are_scaled_and_argmax_stable() {
    let (w, store, _dir, segs) = setup();
    for alg in [LinkAlgorithm::Naive, LinkAlgorithm::FullRecompute, LinkAlgorithm::LegoLink { k: 16 }] {
        let m = dump_attention(&w, &store, &segs, alg, 1, 2, MapRows::Decoded(4)).unwrap();
        assert_eq!((m.rows(), m.cols), (4, 160));
        assert_eq!(m.boundaries, [0, 48, 96]);
        assert!(m.scaled.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(m.scaled.iter().cloned().fold(f64::MIN, f64::max), 1.0);
        assert_eq!(m.scaled.iter().cloned().fold(f64::MAX, f64::min), 0.0);
        for r in 0..m.rows() {
            assert_eq!(argmax(m.raw_row(r)) as usize, m.scaled_row(r).iter().enumerate().fold(0, |b, (i, v)| {
                if *v > m.scaled_row(r)[b] { i } else { b }
            }));
        }
    }
}

#[test]
fn selected_rows_keep_the_causal_mask() {
    let (w, store, _dir, segs) = setup();
    let m = dump_attention(&w, &store, &segs, LinkAlgorithm::LegoLink { k: 16 }, 2, 0, MapRows::Selected).unwrap();
    assert_eq!(m.rows(), 48);
    for r in 0..m.rows() {
        let i = m.row_indices[r];
        assert!(m.visible_row(r)[..=i].iter().all(|&v| v));
        assert!(m.visible_row(r)[i + 1..].iter().all(|&v| !v));
        assert!(m.scaled_row(r)[i + 1..].iter().all(|&v| v == 0.0));
        assert!(m.raw_row(r)[i + 1..].iter().all(|&v| v == 0.0));
    }
}

#[test]
fn recomputation_changes_the_map() {
    let (w, store, _dir, segs) = setup();
    let naive = dump_attention(&w, &store, &segs, LinkAlgorithm::Naive, 3, 1, MapRows::Decoded(4)).unwrap();
    let fr = dump_attention(&w, &store, &segs, LinkAlgorithm::FullRecompute, 3, 1, MapRows::Decoded(4)).unwrap();
    assert_ne!(naive.checksum(), fr.checksum());
    let a = sink_score(&naive, &naive.boundaries).unwrap();
    let b = sink_score(&fr, &fr.boundaries).unwrap();
    assert_eq!((a.len(), b.len()), (3, 3));
}

#[test]
fn out_of_range_layer_and_head() {
    let (w, store, _dir, segs) = setup();
    let err = dump_attention(&w, &store, &segs, LinkAlgorithm::Naive, 4, 0, MapRows::Decoded(1)).unwrap_err();
    assert!(matches!(err, PicError::OutOfRange { what: "layer", .. }));
    let err = dump_attention(&w, &store, &segs, LinkAlgorithm::Naive, 0, 4, MapRows::Decoded(1)).unwrap_err();
    assert!(matches!(err, PicError::OutOfRange { what: "head", .. }));
}
