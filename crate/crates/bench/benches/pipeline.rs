use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use kgstale_bench::random_facts;
use kgstale_core::fact_attention::{Encoder, EncoderConfig, FactGraph};
use kgstale_core::r2n_contrast::build_r2n;
use kgstale_core::Rng;

fn r2n(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_r2n");
    for n in [100, 200, 400, 800] {
        let facts = random_facts(n, 20, 10 * n, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &facts, |b, facts| {
            b.iter(|| build_r2n(n, 20, black_box(facts)).unwrap())
        });
    }
    group.finish();
}

fn matmul(c: &mut Criterion) {
    let mut rng = Rng::new(2);
    let a = rng.glorot(128, 600);
    let w = rng.glorot(600, 128);
    c.bench_function("matmul_128x600x128", |b| b.iter(|| black_box(&a).matmul(black_box(&w)).unwrap()));
}

fn encoder(c: &mut Criterion) {
    let mut group = c.benchmark_group("encoder_forward");
    group.sample_size(20);
    for (n_e, n_r, n_f) in [(14, 55, 1600), (104, 25, 8500)] {
        let facts = random_facts(n_e, n_r, n_f, 3);
        let graph = FactGraph::new(n_e, n_r, &facts, true).unwrap();
        let mut rng = Rng::new(4);
        let e = rng.glorot(n_e, 200);
        let r = rng.glorot(n_r, 200);
        let enc = Encoder::new(200, 200, &EncoderConfig::for_dim(200, 2), &mut rng).unwrap();
        group.bench_function(BenchmarkId::from_parameter(format!("{n_e}e_{n_f}f")), |b| {
            b.iter(|| enc.encode(black_box(&e), black_box(&r), &graph).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, r2n, matmul, encoder);
criterion_main!(benches);
