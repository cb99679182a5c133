//! Shared fixtures for the benchmarks.

use pic_core::link::{assemble, Assembly};
use pic_core::serving::synthetic_cases;
use pic_core::{compile_batch, init_model, CompileVariant, KvStore, ModelConfig, StoreConfig, Weights};

/// A model, a store in a temporary directory and one compiled request.
pub struct Fixture {
    pub weights: Weights,
    pub store: KvStore,
    pub assembly: Assembly,
    pub prompt: Vec<u32>,
    _dir: tempfile::TempDir,
}

impl Fixture {
    pub fn new(chunks: usize, chunk_len: usize, query_len: usize, variant: CompileVariant) -> Self {
        let weights = init_model(&ModelConfig::default()).expect("default config is valid");
        let dir = tempfile::tempdir().expect("temp dir");
        let store = KvStore::open(StoreConfig::new(1 << 30, dir.path())).expect("store");
        let case = synthetic_cases(1, 1, chunks, chunk_len, query_len).remove(0);
        let ids = compile_batch(&weights, &store, &case.chunks, variant).expect("compile");
        let assembly = assemble(&weights, &store, &case.segments(&ids)).expect("assemble");
        let prompt = case.chunks.concat().into_iter().chain(case.query).collect();
        Self { weights, store, assembly, prompt, _dir: dir }
    }
}
