//! Single worker versus the default pool on the data-parallel hot paths.
//! Build with `--no-default-features` to measure the sequential fallback.

use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use heatlab::complexes::assemble_torus;
use heatlab::invariance::{kernel_scan, JetContext};
use heatlab::linalg::hermitian_eigenvalues;
use heatlab::models::TwistForm;
use heatlab::spectral::{eigensolve, fit_spectrum, FitOptions, TraceSelection};

fn twist() -> TwistForm {
    TwistForm::parse(&[2.0 * PI, 2.0 * PI], &["0.4 + 0.2*cos(x)", "0.1"]).unwrap()
}

#[cfg(feature = "parallel")]
fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let build = |n: usize| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let default = rayon::current_num_threads();
    vec![("single".into(), build(1)), (format!("default_{default}"), build(default))]
}

#[cfg(feature = "parallel")]
fn run<R: Send>(pool: &rayon::ThreadPool, f: impl FnOnce() -> R + Send) -> R {
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
fn pools() -> Vec<(String, ())> {
    vec![("sequential".into(), ())]
}

#[cfg(not(feature = "parallel"))]
fn run<R: Send>(_: &(), f: impl FnOnce() -> R + Send) -> R {
    f()
}

fn benches(c: &mut Criterion) {
    let tw = twist();
    let ops = assemble_torus(&tw, 12).unwrap();
    let spec = eigensolve(&ops).unwrap();
    let t0 = 1.1 * spec.t_min();
    let opts = FitOptions::even(2, (t0, 20.0 * t0)).unwrap();

    let mut g = c.benchmark_group("threads");
    g.sample_size(10);
    for (name, pool) in pools() {
        g.bench_with_input(BenchmarkId::new("assemble_torus_16", &name), &pool, |b, p| {
            b.iter(|| run(p, || assemble_torus(black_box(&tw), 16).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("eigensolve_torus_12", &name), &pool, |b, p| {
            b.iter(|| run(p, || eigensolve(black_box(&ops)).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("laplacian_1_eigenvalues", &name), &pool, |b, p| {
            b.iter(|| run(p, || hermitian_eigenvalues(black_box(ops.laplacian(1))).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("fit_supertrace", &name), &pool, |b, p| {
            b.iter(|| run(p, || fit_spectrum(black_box(&spec), TraceSelection::Super, 2, &opts).unwrap()))
        });
        g.bench_with_input(BenchmarkId::new("kernel_scan_4_4", &name), &pool, |b, p| {
            b.iter(|| run(p, || kernel_scan(JetContext::new(4, true, false), 4).unwrap()))
        });
    }
    g.finish();
}

criterion_group!(parallel, benches);
criterion_main!(parallel);
