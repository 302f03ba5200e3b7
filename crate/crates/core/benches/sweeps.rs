use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nhjunction::model::build_many_body_with;
use nhjunction::spectra::single_particle_phase_diagram;
use nhjunction::{Execution, FockBasis, ModelParams};

fn modes() -> Vec<(&'static str, Execution)> {
    vec![
        ("Sequential", Execution::Sequential),
        #[cfg(feature = "parallel")]
        ("Parallel", Execution::Parallel),
    ]
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

pub fn phase_diagram(c: &mut Criterion) {
    let mut group = c.benchmark_group("phase_diagram");
    for n in [21, 61] {
        let gammas = linspace(0.0, 2.0, n);
        let betas = linspace(0.0, 4.0, n);
        for (name, exec) in modes() {
            group.bench_with_input(BenchmarkId::new(name, n * n), &exec, |b, &exec| {
                b.iter(|| single_particle_phase_diagram(&gammas, &betas, 1.0, 1.0, exec).unwrap())
            });
        }
    }
    group.finish();
}

pub fn assembly(c: &mut Criterion) {
    let mut group = c.benchmark_group("many_body_assembly");
    for n in [10u32, 20, 40] {
        let p = ModelParams {
            n_particles: n,
            interaction: 2.0,
            soc: 0.3,
            loss: 0.1,
            ..ModelParams::default()
        };
        let basis = FockBasis::new(n, 4).unwrap();
        for (name, exec) in modes() {
            group.bench_with_input(BenchmarkId::new(name, basis.dim()), &exec, |b, &exec| {
                b.iter(|| build_many_body_with(&p, &basis, false, exec).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, phase_diagram, assembly);
criterion_main!(benches);
