use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use levy_filter::filter::{zakai_filter, FilterOptions};
use levy_filter::model::{build_family, Params};
use levy_filter::simulate::{project_observation, simulate_path, TimeGrid};
use levy_filter::Exec;

fn filter_backends(c: &mut Criterion) {
    let sc = build_family("saturated_affine", &Params::new()).unwrap();
    let grid = TimeGrid::new(0.0, 1.0, 100).unwrap();
    let obs = project_observation(&simulate_path(&sc.spec, grid, &sc.prior, &sc.y0, 7).unwrap());
    let mut group = c.benchmark_group("zakai_filter");
    group.sample_size(10);
    for particles in [2_000usize, 8_000] {
        for (label, exec) in [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)] {
            let opts = FilterOptions::new(particles, 1).with_exec(exec);
            group.bench_with_input(BenchmarkId::new(label, particles), &opts, |b, o| {
                b.iter(|| zakai_filter(&obs, &sc.spec, &sc.prior, o).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, filter_backends);
criterion_main!(benches);
