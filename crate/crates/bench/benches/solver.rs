use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use toalift::{
    jacobian, lm_solve, run_experiment, solve_with_strategy, EvalPoint, ExperimentConfig, LmParams,
    ObjectiveKind, Strategy,
};
use toalift_bench::{demo, random};

fn demo_solves(c: &mut Criterion) {
    let f = demo();
    let params = LmParams::default();
    let plain = EvalPoint::plain(f.x0.clone());
    let lifted = EvalPoint::lifted(f.x0.clone(), vec![1.0]);
    c.bench_function("demo/plain", |b| {
        b.iter(|| {
            lm_solve(
                ObjectiveKind::PlainRange,
                &f.scenario,
                &f.measurement,
                black_box(&plain),
                &params,
            )
        })
    });
    c.bench_function("demo/lifted", |b| {
        b.iter(|| {
            lm_solve(
                ObjectiveKind::LiftedRange { k: 1 },
                &f.scenario,
                &f.measurement,
                black_box(&lifted),
                &params,
            )
        })
    });
}

fn jacobians(c: &mut Criterion) {
    let f = &random(1, 10, 0.01, 3)[0];
    let p = EvalPoint::lifted(f.x0.clone(), vec![0.5]);
    c.bench_function("jacobian/lifted-range/10-stations", |b| {
        b.iter(|| {
            jacobian(
                ObjectiveKind::LiftedRange { k: 1 },
                black_box(&p),
                &f.scenario,
                &f.measurement,
            )
        })
    });
}

fn strategies(c: &mut Criterion) {
    let fixtures = random(100, 4, 0.01, 5);
    let params = LmParams::default();
    let mut group = c.benchmark_group("strategy/100-random-trials");
    for strategy in [
        Strategy::Plain,
        Strategy::lifted(1, 1.0).unwrap(),
        Strategy::restart(1, 1.0).unwrap(),
    ] {
        group.bench_function(strategy.to_string(), |b| {
            b.iter(|| {
                for f in &fixtures {
                    let _ = black_box(solve_with_strategy(
                        &strategy,
                        &f.scenario,
                        &f.measurement,
                        &f.x0,
                        &params,
                    ));
                }
            })
        });
    }
    group.finish();
}

fn experiment(c: &mut Criterion) {
    let config = ExperimentConfig {
        trials: 500,
        strategies: vec![Strategy::Plain, Strategy::lifted(1, 1.0).unwrap()],
        ..ExperimentConfig::default()
    };
    let mut group = c.benchmark_group("experiment");
    group.sample_size(10);
    group.bench_function("500-trials/plain+lifted", |b| {
        b.iter(|| run_experiment(black_box(&config)))
    });
    group.finish();
}

criterion_group!(benches, demo_solves, jacobians, strategies, experiment);
criterion_main!(benches);
