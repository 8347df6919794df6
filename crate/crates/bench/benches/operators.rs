use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use subflow_core::{
    build_chart, flow_step, frame_derivative, index_form, initial_map, leung_sum, random_section,
    tension_with_potential, InitialMap, MapField, Potential, Target,
};

const SIZES: [usize; 2] = [16, 32];

fn map(n: usize) -> MapField {
    let chart = Arc::new(build_chart("twisted-torus", [n, n, n]).unwrap());
    initial_map(&InitialMap::RandomSmooth, chart, Target::Sphere { n: 3 }, 0).unwrap()
}

fn operators(c: &mut Criterion) {
    let mut group = c.benchmark_group("operators");
    group.sample_size(20);
    for n in SIZES {
        let f = map(n);
        let v = random_section(&f, 1, 1.0);
        group.bench_with_input(BenchmarkId::new("frame_derivative_e2", n), &f, |b, f| {
            b.iter(|| frame_derivative(f.chart(), black_box(f.values()), f.dim(), 1).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("tension_height", n), &f, |b, f| {
            b.iter(|| tension_with_potential(black_box(f), &Potential::Height).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("index_form_height", n), &f, |b, f| {
            b.iter(|| index_form(black_box(f), &v, &Potential::Height).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("leung_sum", n), &f, |b, f| {
            b.iter(|| leung_sum(black_box(f), &Potential::Constant(0.0)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("flow_step", n), &f, |b, f| {
            b.iter(|| flow_step(black_box(f), &Potential::Constant(0.0), 0.01).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, operators);
criterion_main!(benches);
