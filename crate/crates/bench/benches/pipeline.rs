use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use segrew_bench::{random_pair, random_trace};
use segrew_core::error_model::optimal_partition;
use segrew_core::segmentation::classify_rewards;
use segrew_core::{
    dpo_loss, InitialState, ObjectiveConfig, ObjectiveKind, SchmittConfig, SegmentAggregate,
};

fn optimal_segmentation(c: &mut Criterion) {
    let mut group = c.benchmark_group("optimal_partition");
    for n in [64usize, 256, 1024] {
        let trace = random_trace(n, 11);
        group.bench_with_input(BenchmarkId::from_parameter(n), &trace, |b, trace| {
            b.iter(|| optimal_partition(black_box(trace.rewards()), 0.5, SegmentAggregate::Mean))
        });
    }
    group.finish();
}

fn classification(c: &mut Criterion) {
    let trace = random_trace(4096, 3);
    let dead = SchmittConfig::dead_zone(0.0, 0.25).unwrap();
    let hyst = SchmittConfig::hysteresis(0.0, 0.25, InitialState::Neutral).unwrap();
    c.bench_function("classify dead-zone 4096", |b| {
        b.iter(|| classify_rewards(black_box(trace.rewards()), &dead))
    });
    c.bench_function("classify hysteresis 4096", |b| {
        b.iter(|| classify_rewards(black_box(trace.rewards()), &hyst))
    });
}

fn dpo(c: &mut Criterion) {
    let pair = random_pair(512, 5);
    let cfg = ObjectiveConfig::new(0.1, ObjectiveKind::Dpo).unwrap();
    c.bench_function("dpo_loss 512", |b| {
        b.iter(|| dpo_loss(black_box(&pair), &cfg, None))
    });
}

criterion_group!(benches, optimal_segmentation, classification, dpo);
criterion_main!(benches);
