use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use cor_core::{
    generate_bps, kmeans_minus_minus, point_distance, run_cor_from_bps, synth_blobs, BpStrategy, CorConfig, DataMatrix,
    DistanceKind, LloydParams, SynthParams,
};

fn blobs(n_per_cluster: usize, d: usize) -> DataMatrix {
    let params = SynthParams {
        n_per_cluster,
        k: 4,
        d,
        cluster_sep: 10.0,
        o: n_per_cluster / 10 + 1,
        outlier_scale: 40.0,
        seed: 7,
    };
    synth_blobs(&params).expect("valid synth params").0
}

fn bench_point_distance(c: &mut Criterion) {
    let mut group = c.benchmark_group("point_distance");
    for r in [10usize, 100, 1000] {
        let width = r * 4;
        let centroid: Vec<f64> = (0..width).map(|j| ((j % 7) as f64 + 1.0) / 8.0).collect();
        let active: Vec<u32> = (0..r).map(|i| (i * 4 + i % 4) as u32).collect();
        group.bench_with_input(BenchmarkId::from_parameter(r), &r, |b, _| {
            b.iter(|| point_distance(black_box(&active), black_box(&centroid), 1e-12).unwrap())
        });
    }
    group.finish();
}

fn bench_kmeans_minus_minus(c: &mut Criterion) {
    let mut group = c.benchmark_group("kmeans_minus_minus");
    group.sample_size(20);
    for n_per_cluster in [100usize, 1000] {
        let x = blobs(n_per_cluster, 8);
        let params = LloydParams::new(4, n_per_cluster / 10 + 1, 3);
        group.bench_with_input(BenchmarkId::from_parameter(x.n_rows()), &x, |b, x| {
            b.iter(|| kmeans_minus_minus(x, &params, DistanceKind::SquaredEuclidean).unwrap())
        });
    }
    group.finish();
}

fn bench_cor_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("cor_solve");
    group.sample_size(10);
    let x = blobs(250, 8);
    for r in [20usize, 100] {
        let bps = generate_bps(&x, r, 4, BpStrategy::Rps, 11).unwrap();
        for restarts in [1usize, 10] {
            let mut cfg = CorConfig::new(4, 26, r, 5);
            cfg.restarts = restarts;
            let id = BenchmarkId::new(format!("r{r}"), format!("restarts{restarts}"));
            group.bench_with_input(id, &bps, |b, bps| b.iter(|| run_cor_from_bps(bps, &cfg).unwrap()));
        }
    }
    group.finish();
}

criterion_group!(benches, bench_point_distance, bench_kmeans_minus_minus, bench_cor_solve);
criterion_main!(benches);
