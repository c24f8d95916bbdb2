use asg_bench::blobs;
use asg_core::kmeans::{assign, kmeans_pp_init};
use asg_core::{train_asg, train_sg, AsgConfig, CodebookMode, HiddenState, KmeansParams, PointSet};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use std::hint::black_box;

fn bench_assign(c: &mut Criterion) {
    let e = blobs(20_000, 16, 1);
    let points = PointSet::new(e.data(), 16).unwrap();
    let mut group = c.benchmark_group("assign");
    group.throughput(Throughput::Elements(e.rows() as u64));
    for k in [64, 256] {
        let seeding = kmeans_pp_init(&points, k, 1).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(k), &k, |b, _| {
            b.iter(|| assign(black_box(&points), black_box(&seeding.centroids)).unwrap())
        });
    }
    group.finish();
}

fn bench_train(c: &mut Criterion) {
    let e = blobs(4_000, 64, 2);
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    for (name, mode, k) in [
        ("separate_k64_m8", CodebookMode::Separate, 64),
        ("shared_k256_m8", CodebookMode::Shared, 256),
    ] {
        let cfg = AsgConfig::new(e.rows(), 64, k, 8, mode).with_seed(3);
        group.bench_function(name, |b| b.iter(|| train_asg(black_box(&e), &cfg).unwrap()));
    }
    group.bench_function("sg_k64", |b| {
        b.iter(|| train_sg(black_box(&e), &KmeansParams::new(64, 3)).unwrap())
    });
    group.finish();
}

fn bench_logits(c: &mut Criterion) {
    let e = blobs(50_000, 256, 4);
    let model = train_asg(
        &e,
        &AsgConfig::new(e.rows(), 256, 64, 32, CodebookMode::Separate).with_seed(5),
    )
    .unwrap();
    let h = HiddenState::new(e.row(7).to_vec()).unwrap();
    let mut group = c.benchmark_group("logits");
    group.throughput(Throughput::Elements(e.rows() as u64));
    group.bench_function("all_tokens", |b| {
        b.iter(|| model.logits_all(black_box(&h)).unwrap())
    });
    group.bench_function("reconstruct_all", |b| b.iter(|| model.reconstruct_all()));
    group.finish();
}

criterion_group!(benches, bench_assign, bench_train, bench_logits);
criterion_main!(benches);
