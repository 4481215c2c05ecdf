//! Replica fan-out: the rayon path against the sequential fallback on the
//! same per-replica workload (a flat-start height trajectory).

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use harnesslab::lattice::{Grid, LatticeBox};
use harnesslab::par::{map_replicas, map_replicas_sequential};
use harnesslab::process::{evolve_height, required_window, HeightField};
use harnesslab::{validate_kernel, KernelSpec, NoiseField, NoiseModel};

fn replicas(c: &mut Criterion) {
    let kernel = validate_kernel(&KernelSpec::lazy()).unwrap();
    let noise = NoiseField::new(NoiseModel::gaussian(1.0), 1);
    let steps = 512;
    let site = LatticeBox::interval(0, 0);
    let window = required_window(&kernel, &site, steps);
    let one = |r: u64| {
        let h0 = HeightField::new(Grid::zeros(window.clone()), 0);
        evolve_height(&h0, &kernel, &noise, r, steps, &site)
            .unwrap()
            .grid
            .data()[0]
    };

    let mut group = c.benchmark_group("replicas");
    group.sample_size(10);
    for count in [16u64, 64] {
        group.bench_with_input(BenchmarkId::new("rayon", count), &count, |b, &n| {
            b.iter(|| map_replicas(n, one))
        });
        group.bench_with_input(BenchmarkId::new("sequential", count), &count, |b, &n| {
            b.iter(|| map_replicas_sequential(n, one))
        });
    }
    group.finish();
}

criterion_group!(benches, replicas);
criterion_main!(benches);
