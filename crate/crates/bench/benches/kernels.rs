use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use farm_bench::{factor_panel, gaussian, sparse_response};
use farm_core::{
    hac_long_run_cov, lasso_fit, lasso_path_bic, pca_factors, KernelKind, KernelSpec, LassoConfig, PathConfig,
};
use std::hint::black_box;

fn hac(c: &mut Criterion) {
    let mut group = c.benchmark_group("hac_bartlett");
    for &(d, t) in &[(50, 500), (200, 500), (50, 2000)] {
        let m = gaussian(d, t, 1);
        let spec = KernelSpec::new(KernelKind::Bartlett, (t / 3) as f64).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(format!("d{d}_t{t}")), &m, |b, m| {
            b.iter(|| hac_long_run_cov(black_box(m), &spec).unwrap())
        });
    }
    group.finish();
}

fn lasso(c: &mut Criterion) {
    let mut group = c.benchmark_group("lasso");
    let x = gaussian(500, 100, 2);
    let y = sparse_response(&x, 3);
    let cfg = LassoConfig::default();
    group.bench_function("single_xi", |b| {
        b.iter(|| lasso_fit(black_box(&y), &x, 0.05, None, &cfg).unwrap())
    });
    group.bench_function("bic_path", |b| {
        b.iter(|| lasso_path_bic(black_box(&y), &x, &PathConfig::default()).unwrap())
    });
    group.finish();
}

fn pca(c: &mut Criterion) {
    let mut group = c.benchmark_group("pca");
    for &(n, t) in &[(100, 500), (500, 100), (500, 500)] {
        let panel = factor_panel(n, t, 3, 4);
        group.bench_with_input(BenchmarkId::from_parameter(format!("n{n}_t{t}")), &panel, |b, p| {
            b.iter(|| pca_factors(black_box(p), 3).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, hac, lasso, pca);
criterion_main!(benches);
