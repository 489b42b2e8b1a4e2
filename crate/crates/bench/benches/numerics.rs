use criterion::{black_box, criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use qcl_bench::{harmonic_packet, periodic_field, phase_gaussian};
use qcl_core::characteristics::Integrator;
use qcl_core::phase_ensemble::evolve_liouville;
use qcl_core::quantum::Propagator;

fn spectral_derivative(c: &mut Criterion) {
    let mut group = c.benchmark_group("spectral_derivative");
    for n in [256, 1024, 4096] {
        let (grid, field) = periodic_field(n).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| grid.spectral_derivative(black_box(&field), 0, 1).unwrap())
        });
    }
    group.finish();
}

fn split_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("split_step");
    for (dim, n) in [(1, 1024), (2, 128)] {
        let (h, grid, psi0) = harmonic_packet(dim, n).unwrap();
        let mut prop = Propagator::new(&h, &grid, 1.0, 1e-3).unwrap();
        group.bench_function(BenchmarkId::new(format!("{dim}d"), n), |b| {
            b.iter_batched_ref(|| psi0.clone(), |psi| prop.step(psi).unwrap(), BatchSize::SmallInput)
        });
        let mut nonlinear = Propagator::new(&h, &grid, 1.0, 1e-3).unwrap().with_nonlinear(1.0, 1e-4);
        group.bench_function(BenchmarkId::new(format!("{dim}d_classical_wave"), n), |b| {
            b.iter_batched_ref(|| psi0.clone(), |psi| nonlinear.step(psi).unwrap(), BatchSize::SmallInput)
        });
    }
    group.finish();
}

fn liouville(c: &mut Criterion) {
    let mut group = c.benchmark_group("liouville");
    group.sample_size(10);
    for (qn, pn) in [(64, 32), (128, 64)] {
        let (h, rho) = phase_gaussian(qn, pn).unwrap();
        group.bench_function(BenchmarkId::from_parameter(format!("{qn}x{pn}")), |b| {
            b.iter(|| evolve_liouville(&h, black_box(&rho), 0.5, 1e-2, Integrator::StormerVerlet).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, spectral_derivative, split_step, liouville);
criterion_main!(benches);
