use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use shiftlearn_bench::{regression_table, uniform_matrix};
use shiftlearn_core::cluster::KMeansOptions;
use shiftlearn_core::nn::DEFAULT_WIDTHS;
use shiftlearn_core::{backward, fit_pca, init_mlp, kmeans_best_of, train, TrainConfig};

fn bench_forward_backward(c: &mut Criterion) {
    let table = regression_table(10, 32, 1);
    let net = init_mlp(32, &DEFAULT_WIDTHS, 0).unwrap();
    c.bench_function("forward_batch_10x32", |b| {
        b.iter(|| net.forward_batch(black_box(table.features())).unwrap())
    });
    c.bench_function("backward_batch_10x32", |b| {
        b.iter(|| backward(&net, black_box(table.features()), black_box(table.target())).unwrap())
    });
}

fn bench_train_epoch(c: &mut Criterion) {
    let table = regression_table(230, 32, 2);
    let net = init_mlp(32, &DEFAULT_WIDTHS, 0).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    c.bench_function("train_one_epoch_230_rows", |b| {
        b.iter(|| train(&net, black_box(&table), &cfg).unwrap())
    });
}

fn bench_kmeans(c: &mut Criterion) {
    let x = uniform_matrix(649, 32, 3);
    let opts = KMeansOptions::default();
    c.bench_function("kmeans_best_of_10_k2_649x32", |b| {
        b.iter(|| kmeans_best_of(black_box(&x), 2, 0, &opts).unwrap())
    });
}

fn bench_pca(c: &mut Criterion) {
    let x = uniform_matrix(649, 32, 4);
    c.bench_function("pca_649x32", |b| b.iter(|| fit_pca(black_box(&x)).unwrap()));
}

criterion_group!(
    benches,
    bench_forward_backward,
    bench_train_epoch,
    bench_kmeans,
    bench_pca
);
criterion_main!(benches);
