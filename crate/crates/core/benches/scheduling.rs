use criterion::{criterion_group, criterion_main, Criterion};
use episim::backend::SimulationBackend;
use episim::runtime::{run_with, ExperimentConfig};
use episim::Scheduling;

fn reduced() -> ExperimentConfig {
    ExperimentConfig { rounds: 5, seed: 7, ..ExperimentConfig::default() }
}

fn bench_scheduling(c: &mut Criterion) {
    let config = reduced();
    let mut group = c.benchmark_group("run_5_rounds");
    group.sample_size(10);
    for (name, sched) in [("serial", Scheduling::Serial), ("parallel", Scheduling::Parallel)] {
        group.bench_function(name, |b| {
            b.iter(|| run_with(&config, &SimulationBackend, sched).expect("run succeeds"))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_scheduling);
criterion_main!(benches);
