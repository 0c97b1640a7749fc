use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use matrix_hill::par::Execution;
use matrix_hill::spectrum::{signed_sqrt_grid, sweep};
use matrix_hill::verify::fixtures;
use matrix_hill::HillOperator;

fn bench_sweep(c: &mut Criterion) {
    let op = HillOperator::from_spec(&fixtures::smooth(), Default::default());
    let grid = signed_sqrt_grid(-10.0, 400.0, 4.0);
    let mut group = c.benchmark_group("lyapunov_sweep");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::new(name, grid.len()), &exec, |b, &exec| {
            b.iter(|| sweep(&op, &grid, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
