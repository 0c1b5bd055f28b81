//! Sequential versus data-parallel execution of the two hot loops: a batch
//! of environment steps and a robustness sweep. Build with
//! `--no-default-features` to measure the sequential fallback itself.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use erfi_core::actuation::{assign_injection_modes, InjectionConfig, InjectionStrategy};
use erfi_core::env::{EpisodeConfig, LocomotionEnv, ObservationMode};
use erfi_core::harness::{run_sweep, NamedPolicy, SweepParam, SweepSpec};
use erfi_core::par;
use erfi_core::policy::PolicyParams;
use erfi_core::rbd::{build_model, ModelParams};
use erfi_core::rng;

fn thread_counts() -> Vec<usize> {
    let all = par::current_threads();
    if all > 1 {
        vec![1, all]
    } else {
        vec![1]
    }
}

fn env_steps(c: &mut Criterion) {
    let model = build_model(&ModelParams::default()).unwrap();
    let config = EpisodeConfig {
        injection: InjectionConfig::with_strategy(InjectionStrategy::Erfi50),
        ..EpisodeConfig::default()
    };
    let modes = assign_injection_modes(64, InjectionStrategy::Erfi50);
    let fresh = || -> Vec<LocomotionEnv> {
        modes
            .iter()
            .enumerate()
            .map(|(i, &m)| LocomotionEnv::new(config.clone(), model.clone(), m, rng::stream(0, i as u64)).unwrap())
            .collect()
    };
    let mut group = c.benchmark_group("env_step_64");
    for threads in thread_counts() {
        group.bench_with_input(BenchmarkId::from_parameter(threads), &threads, |b, &t| {
            let mut envs = fresh();
            b.iter(|| {
                par::with_threads(t, || {
                    par::for_each_mut(&mut envs, |_, e| {
                        let tr = e.step(&[0.05, -0.05, 0.05, -0.05]);
                        if tr.outcome != erfi_core::env::Outcome::Running {
                            e.reset().unwrap();
                        }
                        black_box(tr.observation);
                    })
                })
            });
        });
    }
    group.finish();
}

fn sweep(c: &mut Criterion) {
    let model = build_model(&ModelParams::default()).unwrap();
    let obs = ObservationMode::Blind.len(4);
    let policies: Vec<NamedPolicy> = (0..2)
        .map(|k| NamedPolicy {
            id: format!("p{k}"),
            params: PolicyParams::init(&mut rng::stream(k, 0), &[obs, 64, 32, 4], 4, 0.5, 0.1),
        })
        .collect();
    let mut spec = SweepSpec::new(SweepParam::FrictionMu, vec![0.2, 0.5, 0.8]);
    spec.trials = 4;
    spec.trial.budget = 2.0;
    let mut group = c.benchmark_group("sweep_24_trials");
    group.sample_size(10);
    for threads in thread_counts() {
        group.bench_with_input(BenchmarkId::from_parameter(threads), &threads, |b, &t| {
            b.iter(|| par::with_threads(t, || black_box(run_sweep(&policies, &model, &spec).unwrap())));
        });
    }
    group.finish();
}

criterion_group!(benches, env_steps, sweep);
criterion_main!(benches);
