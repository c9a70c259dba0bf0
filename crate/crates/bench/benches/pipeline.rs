use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use medclaim::{bm25, crf, dense, Metric, QueryMode};
use medclaim_bench as fx;

fn crf_inference(c: &mut Criterion) {
    let mut group = c.benchmark_group("crf");
    let n_features = 50_000;
    for labels in [3, 7] {
        let w = fx::weights(1, n_features, labels);
        let feats = fx::features(2, 40, n_features, 18);
        group.bench_with_input(BenchmarkId::new("forward", labels), &labels, |b, _| {
            b.iter(|| crf::forward_log_z(&w, black_box(&feats)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("viterbi", labels), &labels, |b, _| {
            b.iter(|| crf::viterbi(&w, black_box(&feats)).unwrap())
        });
        let batch = fx::labeled_batch(3, 8, 40, n_features, labels);
        group.bench_with_input(BenchmarkId::new("nll_gradient", labels), &labels, |b, _| {
            b.iter(|| crf::nll_gradient(&w, black_box(&batch), 1e-2).unwrap())
        });
    }
    group.finish();
}

fn bm25_search(c: &mut Criterion) {
    let docs = fx::abstracts(4, 10_000, 200);
    let index = bm25::build_index(&docs, Default::default()).unwrap();
    let queries: Vec<_> = fx::claims(5, 64).iter().map(|q| bm25::claim_query(q, QueryMode::ClaimPlusPio)).collect();
    let mut group = c.benchmark_group("bm25");
    group.bench_function("build_1k", |b| {
        b.iter(|| bm25::build_index(black_box(&docs[..1000]), Default::default()).unwrap())
    });
    for k in [10, 100] {
        group.bench_with_input(BenchmarkId::new("search_10k", k), &k, |b, &k| {
            b.iter(|| {
                for q in &queries {
                    black_box(bm25::search(&index, q, k).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn dense_top_k(c: &mut Criterion) {
    let store = fx::vectors(6, 20_000, 768);
    let query = fx::vectors(7, 1, 768);
    let q = query.vector(0);
    let mut group = c.benchmark_group("dense");
    for metric in [Metric::Dot, Metric::Cosine] {
        group.bench_function(BenchmarkId::new("top_100_of_20k", metric.to_string()), |b| {
            b.iter(|| dense::top_k(&store, "q", black_box(q), 100, metric).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, crf_inference, bm25_search, dense_top_k);
criterion_main!(benches);
