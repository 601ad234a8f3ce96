//! Sequential against parallel execution for the two data-parallel workloads:
//! initial-condition sweeps and finite-difference oracles. Without the
//! `parallel` feature both variants run sequentially.

use std::collections::BTreeMap;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use impactflow::sensitivity::finite_difference_derivative_with;
use impactflow::zoo::entry;
use impactflow::{sweep, Execution, SolverConfig, SweepSpec, SweepTarget};

const EXECUTIONS: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn pitch_sweep(c: &mut Criterion) {
    let trot = entry("soft-trot", &BTreeMap::new()).unwrap();
    let spec = SweepSpec { target: SweepTarget::Family("pitch".into()), start: -0.05, stop: 0.05, count: 201 };
    let config = SolverConfig::default();
    let mut group = c.benchmark_group("soft-trot pitch sweep (201 points)");
    group.sample_size(10);
    for (name, execution) in EXECUTIONS {
        group.bench_with_input(BenchmarkId::from_parameter(name), &execution, |b, &execution| {
            b.iter(|| {
                sweep(&*trot.model, trot.default_initial(), Some(&trot.family), &spec, 1.1, &config, execution).unwrap()
            })
        });
    }
    group.finish();
}

fn finite_difference(c: &mut Criterion) {
    let trot = entry("soft-trot", &BTreeMap::new()).unwrap();
    let config = SolverConfig::default();
    let initial = trot.initial_state("pitched").unwrap().clone();
    let mut group = c.benchmark_group("soft-trot finite-difference oracle");
    group.sample_size(10);
    for (name, execution) in EXECUTIONS {
        group.bench_with_input(BenchmarkId::from_parameter(name), &execution, |b, &execution| {
            b.iter(|| {
                finite_difference_derivative_with(&*trot.model, black_box(&initial), 1.1, &config, 1e-5, execution)
                    .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, pitch_sweep, finite_difference);
criterion_main!(benches);
