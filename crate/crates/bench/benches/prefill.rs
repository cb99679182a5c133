use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pic_bench::Fixture;
use pic_core::compile::compile_payload;
use pic_core::model::full_prefill;
use pic_core::CompileVariant;

fn prefill(c: &mut Criterion) {
    let mut group = c.benchmark_group("prefill");
    group.sample_size(10);
    let f = Fixture::new(4, 512, 16, CompileVariant::Standard);
    for n in [128usize, 512, 2064] {
        group.bench_with_input(BenchmarkId::new("full_prefill", n), &f.prompt[..n], |b, tokens| {
            b.iter(|| full_prefill(&f.weights, tokens, false).unwrap())
        });
    }
    group.bench_function("compile_chunk_512", |b| {
        b.iter(|| compile_payload(&f.weights, &f.prompt[..512], CompileVariant::Standard).unwrap())
    });
    group.finish();
}

criterion_group!(benches, prefill);
criterion_main!(benches);
