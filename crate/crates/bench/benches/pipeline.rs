use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use posseg::pknn::{self, knn_search, KdTree};
use posseg::superpixels::{aggregate_features, segment_superpixels};
use posseg::{pflicm, FeatureConfig, PflicmParams, PknnParams};
use posseg_bench::{blobs, graph, texture_image};

fn knn(c: &mut Criterion) {
    let mut group = c.benchmark_group("knn_search");
    for n in [1000, 4000, 16000] {
        let (train, test) = blobs(n, 200);
        let tree = KdTree::build(train.features().clone());
        group.throughput(Throughput::Elements(test.len() as u64));
        group.bench_with_input(BenchmarkId::new("k6", n), &n, |b, _| {
            b.iter(|| {
                for q in test.features().rows() {
                    black_box(knn_search(&tree, q, 6).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn pknn_classify(c: &mut Criterion) {
    let mut group = c.benchmark_group("pknn");
    let (train, test) = blobs(4000, 2000);
    group.bench_function("fit_4000", |b| b.iter(|| pknn::fit(black_box(&train), &PknnParams::default()).unwrap()));
    let model = pknn::fit(&train, &PknnParams::default()).unwrap();
    group.throughput(Throughput::Elements(test.len() as u64));
    group.bench_function("classify_2000", |b| b.iter(|| model.classify_batch(black_box(test.features())).unwrap()));
    group.finish();
}

fn pflicm_fit_predict(c: &mut Criterion) {
    let mut group = c.benchmark_group("pflicm");
    group.sample_size(10);
    let (train, test) = blobs(2000, 2000);
    let (train_graph, test_graph) = (graph(train.len()), graph(test.len()));
    let params = PflicmParams::default();
    group.bench_function("fit_2000", |b| b.iter(|| pflicm::fit(black_box(train.features()), &train_graph, &params, 1).unwrap()));
    let fit = pflicm::fit(train.features(), &train_graph, &params, 1).unwrap();
    let (model, _) = pflicm::label_clusters(&fit.model, &train, &fit.assignments).unwrap();
    group.bench_function("predict_2000", |b| b.iter(|| model.predict(black_box(test.features()), &test_graph).unwrap()));
    group.finish();
}

fn features(c: &mut Criterion) {
    let mut group = c.benchmark_group("image");
    group.sample_size(10);
    let img = texture_image(256);
    let cfg = FeatureConfig::default();
    group.bench_function("features_256", |b| b.iter(|| posseg::features::extract_with(black_box(&img), &cfg).unwrap()));
    group.bench_function("superpixels_256", |b| b.iter(|| segment_superpixels(black_box(&img), 300, 0.5).unwrap()));
    let stack = posseg::features::extract_with(&img, &cfg).unwrap();
    let sp = segment_superpixels(&img, 300, 0.5).unwrap();
    group.bench_function("aggregate_256", |b| b.iter(|| aggregate_features(black_box(&stack), &sp).unwrap()));
    group.finish();
}

criterion_group!(benches, knn, pknn_classify, pflicm_fit_predict, features);
criterion_main!(benches);
