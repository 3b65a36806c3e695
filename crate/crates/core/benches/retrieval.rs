//! Retrieval kernels: chunkers over a large document, exact top-k search,
//! and batch mock embedding.

use attributor_core::backends::mock::MockEmbed;
use attributor_core::backends::{embed, EmbedBackend};
use attributor_core::model::EvidenceChunk;
use attributor_core::retrieval::{build_index, chunk_fixed, chunk_recursive};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::Rng;
use rand::SeedableRng;

fn synthetic_document(chars: usize) -> String {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mut out = String::with_capacity(chars + 64);
    while out.chars().count() < chars {
        let words = rng.gen_range(5..15);
        for _ in 0..words {
            let len = rng.gen_range(2..10);
            for _ in 0..len {
                out.push(rng.gen_range(b'a'..=b'z') as char);
            }
            out.push(' ');
        }
        out.push_str(if rng.gen_bool(0.2) { ".\n\n" } else { ". " });
    }
    out
}

fn bench_chunkers(c: &mut Criterion) {
    let document = synthetic_document(1_000_000);
    let mut group = c.benchmark_group("chunkers");
    group.throughput(Throughput::Bytes(document.len() as u64));
    group.bench_function("fixed_512", |b| {
        b.iter(|| chunk_fixed(&document, 512).len())
    });
    group.bench_function("recursive_512_overlap_64", |b| {
        b.iter(|| chunk_recursive(&document, 512, 64).len())
    });
    group.finish();
}

fn bench_query_index(c: &mut Criterion) {
    const DIM: usize = 256;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut unit = || {
        let v: Vec<f32> = (0..DIM).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
        let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        v.iter().map(|x| x / norm).collect::<Vec<f32>>()
    };
    let mut group = c.benchmark_group("query_index");
    for size in [1_000usize, 10_000] {
        let chunks: Vec<EvidenceChunk> = (0..size)
            .map(|i| {
                EvidenceChunk::new(
                    format!("c{i:05}"),
                    "https://bench.example/doc",
                    i,
                    "chunk",
                    16,
                    unit(),
                )
                .unwrap()
            })
            .collect();
        let index = build_index(chunks).unwrap();
        let query = unit();
        group.throughput(Throughput::Elements(size as u64));
        group.bench_with_input(BenchmarkId::from_parameter(size), &index, |b, index| {
            b.iter(|| index.query(&query, 5))
        });
    }
    group.finish();
}

fn bench_embedding(c: &mut Criterion) {
    let backend = MockEmbed::new(64);
    let texts: Vec<String> = (0..5000)
        .map(|i| format!("evidence chunk number {i} about heat pumps and retrieval"))
        .collect();
    let mut group = c.benchmark_group("mock_embed");
    group.throughput(Throughput::Elements(texts.len() as u64));
    group.bench_function("batch_5000", |b| {
        b.iter(|| embed(&backend as &dyn EmbedBackend, &texts).unwrap().len())
    });
    group.finish();
}

criterion_group!(benches, bench_chunkers, bench_query_index, bench_embedding);
criterion_main!(benches);
