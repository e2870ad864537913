use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use eigsur::greedy::{GreedyConfig, GreedyState, SweepMode};
use eigsur::par::Parallelism;
use eigsur::problems::synthetic_affine;

fn sweep(c: &mut Criterion) {
    let p = synthetic_affine(200, 3, 2, 1).unwrap().pencil;
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10);
    for (name, par) in [("sequential", Parallelism::Sequential), ("parallel", Parallelism::Parallel)] {
        let cfg = GreedyConfig {
            m: 2,
            use_derivatives: true,
            sweep: SweepMode::Exhaustive,
            parallelism: par,
            ..Default::default()
        };
        let state = GreedyState::initialize(&p, &cfg).unwrap();
        group.bench_function(name, |b| {
            b.iter_batched(|| state.clone(), |mut s| s.sweep().unwrap(), BatchSize::LargeInput)
        });
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
