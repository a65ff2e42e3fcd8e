//! Benchmarks for the hot paths: the LP solver on an agent subproblem, one
//! full distributed trial, the exact DP baseline, and playback.

use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};

use pdvrp_core::builder::build_centralized_milp;
use pdvrp_core::exact::optimal_fleet_plan;
use pdvrp_core::harness::{run_distributed, run_trial, TrialConfig};
use pdvrp_core::instance::{generate_random_instance, GenOptions};
use pdvrp_core::mission::playback;
use pdvrp_core::simplex::solve_lp;

fn bench_lp_relaxation(c: &mut Criterion) {
    let inst = generate_random_instance(1, 3, 4, &GenOptions::default()).unwrap();
    let (model, _) = build_centralized_milp(&inst).unwrap();
    let lp = model.lp_relaxation();
    c.bench_function("lp_relaxation_n3_p4", |b| {
        b.iter(|| solve_lp(&lp).unwrap())
    });
}

fn bench_exact_dp(c: &mut Criterion) {
    let inst = generate_random_instance(2, 5, 6, &GenOptions::default()).unwrap();
    c.bench_function("exact_dp_n5_p6", |b| {
        b.iter(|| optimal_fleet_plan(&inst).unwrap())
    });
}

fn bench_distributed_trial(c: &mut Criterion) {
    let cfg = TrialConfig {
        seed: 3,
        n_vehicles: 3,
        n_pickups: 3,
        t_final: 50,
        t_switch: 25,
        baseline: false,
        ..Default::default()
    };
    c.bench_function("distributed_trial_n3_p3_t50", |b| {
        b.iter(|| run_trial(&cfg).unwrap())
    });
}

fn bench_playback(c: &mut Criterion) {
    let cfg = TrialConfig {
        seed: 4,
        n_vehicles: 5,
        n_pickups: 5,
        baseline: false,
        ..Default::default()
    };
    let inst = Arc::new(
        generate_random_instance(cfg.seed, cfg.n_vehicles, cfg.n_pickups, &cfg.gen).unwrap(),
    );
    let (_, _, routes) = run_distributed(&inst, &cfg).unwrap();
    c.bench_function("playback_n5_p5", |b| {
        b.iter(|| playback(&inst, &routes).unwrap())
    });
}

criterion_group!(
    benches,
    bench_lp_relaxation,
    bench_exact_dp,
    bench_distributed_trial,
    bench_playback
);
criterion_main!(benches);
