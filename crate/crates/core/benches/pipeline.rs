use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use vahf::features::{sample_features, FeatureConfig};
use vahf::harness::simulate_features;
use vahf::preprocess::{preprocess_session, PreprocessConfig};
use vahf::simulate::{default_plans, make_session, SimConfig};
use vahf::Exec;

fn executors() -> [(&'static str, Exec); 2] {
    [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)]
}

fn bench_features(c: &mut Criterion) {
    let plan = &default_plans(1, 3)[0];
    let (rec, _) = make_session(plan, &SimConfig::default()).unwrap();
    let samples = preprocess_session(
        &rec,
        plan.user_id,
        plan.label,
        plan.posture,
        &plan.commands,
        &PreprocessConfig::default(),
    )
    .unwrap();
    let cfg = FeatureConfig::default();
    let mut group = c.benchmark_group("sample_features");
    group.sample_size(10);
    for (name, exec) in executors() {
        group.bench_with_input(BenchmarkId::new(name, samples.len()), &exec, |b, exec| {
            b.iter(|| exec.try_map(&samples, |s| sample_features(s, &cfg)).unwrap())
        });
    }
    group.finish();
}

fn bench_sessions(c: &mut Criterion) {
    let plans: Vec<_> = default_plans(1, 4).into_iter().take(4).collect();
    let sim = SimConfig::default();
    let pre = PreprocessConfig::default();
    let feat = FeatureConfig::default();
    let mut group = c.benchmark_group("simulate_features");
    group.sample_size(10);
    for (name, exec) in executors() {
        group.bench_with_input(BenchmarkId::new(name, plans.len()), &exec, |b, &exec| {
            b.iter(|| simulate_features(&plans, &sim, &pre, &feat, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_features, bench_sessions);
criterion_main!(benches);
