use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rankfair_core::{
    assign_ranks, constraint_bounds, generate_synthetic, project_onto_q, run, standardize, Group,
    ProximalState, SolverConfig, SyntheticSpec,
};

fn labelled(n: usize, shift: f64, seed: u64) -> (Vec<f64>, Vec<Group>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<Group> = (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                Group::A
            } else {
                Group::B
            }
        })
        .collect();
    let values = labels
        .iter()
        .map(|g| rng.random_range(0.0..1.0) + if *g == Group::A { shift } else { 0.0 })
        .collect();
    (values, labels)
}

fn bench_ranking(c: &mut Criterion) {
    let mut group = c.benchmark_group("assign_ranks");
    for n in [1_000, 10_000] {
        let (values, _) = labelled(n, 0.0, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &values, |b, v| {
            b.iter(|| assign_ranks(v).unwrap())
        });
    }
    group.finish();
}

fn bench_projection(c: &mut Criterion) {
    let mut group = c.benchmark_group("project_onto_q");
    group.sample_size(10);
    for (name, shift) in [("shrink", 0.8), ("grow", -0.5)] {
        let (values, labels) = labelled(1_000, shift, 2);
        let n_a = labels.iter().filter(|&&g| g == Group::A).count();
        let spec = constraint_bounds(n_a, labels.len() - n_a, 0.01).unwrap();
        let zeros = vec![0.0; values.len()];
        for tau in [1_000u64, 10_000_000] {
            group.bench_function(BenchmarkId::new(name, tau), |b| {
                b.iter(|| project_onto_q(&values, &zeros, &spec, &labels, tau).unwrap())
            });
        }
    }
    group.finish();
}

fn bench_inner(c: &mut Criterion) {
    let data = standardize(&generate_synthetic(&SyntheticSpec::new(0.9, 3)).unwrap()).0;
    let config = SolverConfig::default();
    let zeros = vec![0.0; data.len()];
    c.bench_function("solve_inner_50", |b| {
        b.iter_batched(
            || ProximalState::new(&data, config.proximal_params(), zeros.clone()).unwrap(),
            |mut s| s.solve_inner(&data, &zeros, &zeros, 50).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn bench_run(c: &mut Criterion) {
    let data = standardize(&generate_synthetic(&SyntheticSpec::new(0.9, 4)).unwrap()).0;
    let mut group = c.benchmark_group("run");
    group.sample_size(10);
    let config = SolverConfig {
        outer_iters: 5,
        ..Default::default()
    };
    group.bench_function("alpha_0.9_s5", |b| b.iter(|| run(&data, &config).unwrap()));
    group.finish();
}

criterion_group!(ranking, bench_ranking);
criterion_group!(projection, bench_projection);
criterion_group!(solver, bench_inner, bench_run);
criterion_main!(ranking, projection, solver);
