use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use kernex::changepoint::{scan, scan_from_scratch};
use kernex::kernels::gram_matrix_symmetric;
use kernex::mmd::{mmd2_biased, mmd2_biased_tiled};
use kernex::sanov::{exact_error_curve, ThresholdRule};
use kernex::thresholds::PooledGram;
use kernex::{StatisticKind, Window};
use kernex_bench::{bernoulli_pair, gaussian_sample, step_sequence, unit_kernel};

fn gram(c: &mut Criterion) {
    let k = unit_kernel();
    let mut group = c.benchmark_group("gram");
    for n in [100, 400, 1600] {
        let x = gaussian_sample(n, 2, 0.0, 1);
        group.throughput(Throughput::Elements((n * n) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &x, |b, x| {
            b.iter(|| gram_matrix_symmetric(black_box(x), &k))
        });
    }
    group.finish();
}

fn mmd(c: &mut Criterion) {
    let k = unit_kernel();
    let mut group = c.benchmark_group("mmd_biased");
    for n in [200, 1000, 4000] {
        let x = gaussian_sample(n, 2, 0.0, 1);
        let y = gaussian_sample(n, 2, 0.5, 2);
        group.throughput(Throughput::Elements((4 * n * n) as u64));
        group.bench_with_input(BenchmarkId::new("default", n), &n, |b, _| {
            b.iter(|| mmd2_biased(black_box(&x), black_box(&y), &k).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("tile_64", n), &n, |b, _| {
            b.iter(|| mmd2_biased_tiled(black_box(&x), black_box(&y), &k, 64).unwrap())
        });
    }
    group.finish();
}

fn permutation_null(c: &mut Criterion) {
    let k = unit_kernel();
    let x = gaussian_sample(200, 2, 0.0, 1);
    let y = gaussian_sample(200, 2, 0.5, 2);
    let pooled = PooledGram::new(&x, &y, std::slice::from_ref(&k)).unwrap();
    let mut group = c.benchmark_group("permutation_null");
    group.sample_size(20);
    for replicates in [100, 1000] {
        group.bench_with_input(BenchmarkId::from_parameter(replicates), &replicates, |b, &r| {
            b.iter(|| pooled.permuted(StatisticKind::Biased, r, 7))
        });
    }
    group.finish();
}

fn changepoint_scan(c: &mut Criterion) {
    let k = unit_kernel();
    let mut group = c.benchmark_group("changepoint_scan");
    group.sample_size(20);
    for n in [100, 400] {
        let z = step_sequence(n, 2.0, 3);
        let w = Window::default_for(n).unwrap();
        group.bench_with_input(BenchmarkId::new("incremental", n), &z, |b, z| {
            b.iter(|| scan(black_box(z), &k, w).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("from_scratch", n), &z, |b, z| {
            b.iter(|| scan_from_scratch(black_box(z), &k, w).unwrap())
        });
    }
    group.finish();
}

fn exact_curve(c: &mut Criterion) {
    let (p, q) = bernoulli_pair();
    let k = unit_kernel();
    let rule = ThresholdRule::Ldb { alpha: 0.05 };
    let mut group = c.benchmark_group("exact_error_curve");
    group.sample_size(10);
    for n in [50, 200, 800] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| exact_error_curve(&p, &q, &k, rule, &[(n, n)]).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gram, mmd, permutation_null, changepoint_scan, exact_curve);
criterion_main!(benches);
