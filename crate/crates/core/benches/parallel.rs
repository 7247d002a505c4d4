use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use holo_core::exec::Exec;
use holo_core::grid::{homogeneous_medium, make_grid, PlaneField, SourcePlane, C64};
use holo_core::helmholtz::{solve_helmholtz, HelmholtzSettings};
use holo_core::propagation::{AsPlan, EvanescentPolicy};
use ndarray::Array2;

const F: f64 = 2e6;
const C0: f64 = 1480.0;
const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn angular_spectrum(c: &mut Criterion) {
    let mut group = c.benchmark_group("angular_spectrum_256");
    let shape = [256, 256];
    let q = PlaneField::new(
        1.2e-4,
        Array2::from_shape_fn(shape, |(i, j)| C64::from_polar(1.0, 0.01 * (i * j) as f64)),
    )
    .unwrap();
    for (name, exec) in POLICIES {
        let plan = AsPlan::with_options(shape, 1.2e-4, C0, F, EvanescentPolicy::Decay, false, exec).unwrap();
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| plan.propagate(&q, 5e-3).unwrap()));
    }
    group.finish();
}

fn helmholtz(c: &mut Criterion) {
    let mut group = c.benchmark_group("helmholtz_128x128");
    group.sample_size(10);
    let g = make_grid(&[128, 128], C0 / F / 6.0, 16).unwrap();
    let mut m = homogeneous_medium(&g, C0, 1000.0, 0.0).unwrap();
    // Polymer block in the middle of the domain.
    for ((_, i, j), c) in m.props.c.indexed_iter_mut() {
        if (48..80).contains(&i) && (40..60).contains(&j) {
            *c = 2473.0;
        }
    }
    let src = SourcePlane::disc(&g, 1, 20, 5e-3, 1.0, 0.0, F).unwrap();
    for (name, exec) in POLICIES {
        let mut s = HelmholtzSettings::default().with_tolerance(1e-6);
        s.exec = exec;
        group.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| solve_helmholtz(&m, &src, &s).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, angular_spectrum, helmholtz);
criterion_main!(benches);
