use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use gaterace::batch::{BatchEnv, Execution};
use gaterace::{Action, EnvConfig};

fn step_batch(batch: &mut BatchEnv, actions: &[Action], seed: &mut u64) {
    let results = batch.step(actions).expect("batch size matches");
    for (i, r) in results.into_iter().enumerate() {
        if r.expect("env running").done() {
            *seed += 1;
            batch.reset_one(i, *seed);
        }
    }
}

fn bench(c: &mut Criterion) {
    let mut group = c.benchmark_group("batched_step");
    for render in [false, true] {
        for size in [1usize, 8, 64] {
            group.throughput(Throughput::Elements(size as u64));
            for execution in [Execution::Sequential, Execution::Parallel] {
                if execution == Execution::Parallel && !Execution::parallel_available() {
                    continue;
                }
                let cfg = EnvConfig {
                    render,
                    ..EnvConfig::default()
                };
                let mut batch = BatchEnv::new(cfg, size).unwrap().with_execution(execution);
                batch.reset(0);
                let actions = vec![Action::uniform(0.45); size];
                let mut seed = size as u64;
                let mode = if render { "render" } else { "physics" };
                let id = BenchmarkId::new(format!("{mode}/{execution:?}").to_lowercase(), size);
                group.bench_function(id, |b| b.iter(|| step_batch(&mut batch, &actions, &mut seed)));
            }
        }
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
