use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use smcae_core::eval::{sq_distances, svm_train, SvmParams};
use smcae_core::hog::hog;
use smcae_core::smcae::{build_variant, layer_gradient, layer_objective};
use smcae_core::synthgen::{distance_transform, rasterize, BinaryImage, ShapeModel};
use smcae_core::{GrayImage, HogConfig, SmcaeLayer, SparsityConfig, Variant};

fn unit(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(0.1..0.9))
}

fn layer(c: &mut Criterion) {
    let mut g = c.benchmark_group("smcae_layer");
    g.sample_size(10);
    for &(n, m, k) in &[(500, 2916, 64), (2000, 2916, 64)] {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let xs = unit(&mut rng, n, m);
        let xr = unit(&mut rng, n, m);
        let set = build_variant(Variant::Smcae, xs.view(), xr.view()).unwrap();
        let l = SmcaeLayer::init(m, m, k, true, &mut rng);
        let s = SparsityConfig::default();
        let id = format!("{n}x{m}->{k}");
        g.bench_with_input(BenchmarkId::new("objective", &id), &(), |b, _| {
            b.iter(|| layer_objective(&l, &set, &s, 50.0).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("gradient", &id), &(), |b, _| {
            b.iter(|| layer_gradient(&l, &set, &s, 50.0).unwrap())
        });
    }
    g.finish();
}

fn features(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let img = GrayImage::new(unit(&mut rng, 50, 50)).unwrap();
    let cfg = HogConfig::default();
    c.bench_function("hog_50x50", |b| b.iter(|| hog(&img, &cfg).unwrap()));

    let shape = ShapeModel::from_contours(&[(0..32)
        .map(|i| {
            let t = i as f64 / 32.0 * std::f64::consts::TAU;
            smcae_core::synthgen::Point { x: 16.0 + 10.0 * t.cos(), y: 16.0 + 12.0 * t.sin() }
        })
        .collect()])
    .unwrap();
    c.bench_function("rasterize_32", |b| b.iter(|| rasterize(&shape, 32, 32).unwrap()));
    let mask: BinaryImage = rasterize(&shape, 32, 32).unwrap();
    c.bench_function("distance_transform_32", |b| b.iter(|| distance_transform(&mask)));
}

fn svm(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = unit(&mut rng, 400, 64);
    let y: Vec<usize> = (0..400).map(|i| i % 4).collect();
    let p = SvmParams::new(10.0, 1.0 / 64.0);
    let mut g = c.benchmark_group("svm");
    g.sample_size(10);
    g.bench_function("distances_400x64", |b| b.iter(|| sq_distances(x.view(), x.view()).unwrap()));
    g.bench_function("train_400x64_4class", |b| b.iter(|| svm_train(x.view(), &y, &p).unwrap()));
    g.finish();
}

criterion_group!(benches, layer, features, svm);
criterion_main!(benches);
