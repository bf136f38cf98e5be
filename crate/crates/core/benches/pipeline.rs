//! Sequential vs parallel runs of the voxelizer and the full pipeline on the
//! bundled office scene.
//!
//! `cargo bench -p voxrec` compares a one-thread pool against the default
//! pool. Building with `--no-default-features` removes rayon altogether, in
//! which case both variants take the sequential path.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use voxrec::par;
use voxrec::pipeline::{run, PipelineConfig};
use voxrec::synth::{generate, SceneSpec};
use voxrec::voxelizer::{voxelize, VoxelizeRequest};

fn bench(c: &mut Criterion) {
    let spec = SceneSpec::preset("office_small").expect("preset");
    let mesh = generate(&spec, 0).expect("scene").mesh;
    let cfg = PipelineConfig::default();
    let req = VoxelizeRequest::default();
    let variants = [("sequential", 1), ("parallel", 0)];

    let mut g = c.benchmark_group("voxelize");
    for (name, threads) in variants {
        g.bench_with_input(BenchmarkId::from_parameter(name), &threads, |b, &t| {
            par::with_threads(t, || b.iter(|| voxelize(black_box(&mesh), &req).expect("voxelize")))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    for (name, threads) in variants {
        g.bench_with_input(BenchmarkId::from_parameter(name), &threads, |b, &t| {
            par::with_threads(t, || b.iter(|| run(black_box(&mesh), &cfg).expect("pipeline")))
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
