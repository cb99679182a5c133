use pic_core::compile::{compile_batch, CompileVariant};
use pic_core::model::{init_model, ModelConfig};
use pic_core::serving::synthetic_cases;
use pic_core::store::{KvStore, StoreConfig};
use pic_core::PicError;

#[test]
fn spill_expire_and_restart() {
    let w = init_model(&ModelConfig::new(2, 32, 2, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let chunks: Vec<_> = synthetic_cases(9, 1, 100, 24, 0).remove(0).chunks;
    let per_chunk = 2 * 2 * 24 * 32 * 4;
    let store = KvStore::open(StoreConfig::new(per_chunk * 50, dir.path())).unwrap();
    let ids = compile_batch(&w, &store, &chunks, CompileVariant::Standard).unwrap();
    let stats = store.stats();
    assert!(stats.spills >= 50, "{stats:?}");
    assert!(stats.resident_bytes <= per_chunk * 50);

    let sums: Vec<u64> = ids.iter().map(|&id| store.get(id).unwrap().checksum()).collect();
    let again: Vec<u64> = ids.iter().map(|&id| store.get(id).unwrap().checksum()).collect();
    assert_eq!(sums, again);
    for (id, c) in ids.iter().zip(&chunks) {
        assert_eq!(&store.get(*id).unwrap().tokens, c);
    }

    for &id in &ids[..10] {
        assert!(store.expire(id).unwrap().removed());
        assert!(matches!(store.get(id), Err(PicError::MissingCache(x)) if x == id));
    }
    drop(store);

    let store = KvStore::open(StoreConfig::new(per_chunk * 50, dir.path())).unwrap();
    let mut live = store.live_ids();
    live.sort();
    assert_eq!(live, ids[10..]);
    for (&id, &sum) in ids.iter().zip(&sums).skip(10) {
        assert_eq!(store.get(id).unwrap().checksum(), sum);
    }
    assert!(store.get(ids[0]).is_err());
    // ids are never handed out twice, even after a restart
    let fresh = compile_batch(&w, &store, &chunks[..1], CompileVariant::Standard).unwrap()[0];
    assert!(ids.iter().all(|&id| id < fresh));
}
