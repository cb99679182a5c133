use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use pic_bench::Fixture;
use pic_core::link::{link_execute, plan, Instrumentation, LinkAlgorithm};
use pic_core::CompileVariant;

fn link(c: &mut Criterion) {
    let mut group = c.benchmark_group("link");
    group.sample_size(10);
    for chunks in [4usize, 8] {
        let plain = Fixture::new(chunks, 512, 16, CompileVariant::Standard);
        let dummy = Fixture::new(chunks, 512, 16, CompileVariant::DummyPrefix(4));
        let n = plain.assembly.len();
        for alg in ["naive", "fr", "cacheblend:15", "legolink:16", "legolink0"] {
            let algorithm: LinkAlgorithm = alg.parse().unwrap();
            let f = if algorithm == LinkAlgorithm::LegoLink0 { &dummy } else { &plain };
            let p = plan(algorithm, &f.assembly).unwrap();
            group.bench_with_input(BenchmarkId::new(alg, n), &p, |b, p| {
                b.iter(|| link_execute(&f.weights, &f.assembly, p, Instrumentation::default()).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, link);
criterion_main!(benches);
