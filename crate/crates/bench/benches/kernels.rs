use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use num_complex::Complex64 as C64;
use predissonance::discretize::{assemble_distorted_on, assemble_full_on};
use predissonance::evolve::{SpectralMeasure, StateVector};
use predissonance::resonance::{count_eigenvalues_in_box, resonances_direct_on, resonances_feshbach_on, Feshbach};
use predissonance_bench::fixture;

fn band_lu(c: &mut Criterion) {
    let mut group = c.benchmark_group("shifted_lu");
    for h in [0.35, 0.25] {
        let f = fixture(h);
        let op = assemble_distorted_on(&f.cfg, &f.grid, f.cfg.distortion.theta).unwrap().h;
        let z = C64::new(h, -0.01 * h);
        group.bench_with_input(BenchmarkId::from_parameter(h), &op, |b, op| b.iter(|| op.shifted_lu(z)));
    }
    group.finish();
}

fn resonances(c: &mut Criterion) {
    let f = fixture(0.3);
    let theta = f.cfg.distortion.theta;
    let op = assemble_distorted_on(&f.cfg, &f.grid, theta).unwrap().h;
    let (lo, hi) = f.basis.window;
    let a = f.basis.a;
    let mut group = c.benchmark_group("resonances");
    group.sample_size(10);
    group.bench_function("winding_count", |b| {
        b.iter(|| count_eigenvalues_in_box(&op, (lo - a, hi + a), (-a, a / 4.0)).unwrap())
    });
    group.bench_function("direct", |b| b.iter(|| resonances_direct_on(&f.cfg, &f.grid, &f.basis, theta).unwrap()));
    group.bench_function("feshbach", |b| b.iter(|| resonances_feshbach_on(&f.cfg, &f.grid, &f.basis, theta).unwrap()));
    let fe = Feshbach::new(&f.cfg, &f.grid, &f.basis, theta).unwrap();
    let z = C64::new(f.basis.lambdas()[0], -1e-3);
    group.bench_function("feshbach_det", |b| b.iter(|| fe.det(z).unwrap()));
    group.finish();
}

fn spectral_measure(c: &mut Criterion) {
    let f = fixture(0.3);
    let op = assemble_full_on(&f.cfg, &f.grid).unwrap();
    let phi = StateVector::well_state(&f.basis, 0);
    let mut group = c.benchmark_group("spectral_measure");
    group.sample_size(10);
    group.bench_function("full_diagonalization", |b| b.iter(|| SpectralMeasure::of(&op, &phi).unwrap()));
    group.finish();
}

criterion_group!(benches, band_lu, resonances, spectral_measure);
criterion_main!(benches);
