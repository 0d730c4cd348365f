use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use scpo_core::cmdp::{rollout, TabularCmdp, DEFAULT_DELTA};
use scpo_core::estimators::gae_advantages;
use scpo_core::nn::{Action, Mlp};
use scpo_core::oracle::{safe_mass, KPower, Values, DEFAULT_ENUM_CAP};
use scpo_core::policy::UniformPolicy;

fn branching_cmdp() -> TabularCmdp {
    TabularCmdp::new(
        3,
        2,
        vec![
            0.5, 0.25, 0.25, //
            0.1, 0.8, 0.1, //
            0.3, 0.4, 0.3, //
            0.2, 0.2, 0.6, //
            1.0, 0.0, 0.0, //
            0.0, 0.5, 0.5, //
        ],
        vec![0.3, 0.7, 0.1, 0.9, 0.5, 0.2],
        vec![0.0, 1.0, 0.0],
        2.0,
        5,
        0,
    )
    .unwrap()
}

fn bench_enumeration(c: &mut Criterion) {
    let cmdp = branching_cmdp();
    let pi = UniformPolicy::new(2);
    c.bench_function("oracle/safe_mass_h5", |b| {
        b.iter(|| {
            safe_mass(
                black_box(&cmdp),
                &pi,
                0,
                0.0,
                5,
                None,
                DEFAULT_DELTA,
                DEFAULT_ENUM_CAP,
            )
            .unwrap()
        })
    });
    c.bench_function("oracle/vr_k4_memoized", |b| {
        b.iter(|| {
            let vals = Values::new(black_box(&cmdp), &pi, DEFAULT_DELTA, DEFAULT_ENUM_CAP);
            vals.vr0(0.99, KPower::Finite(4)).unwrap()
        })
    });
}

fn bench_network(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let net = Mlp::new(&[9, 64, 64, 2], 1.0, &mut rng);
    let x: Vec<f64> = (0..9).map(|i| (i as f64).sin()).collect();
    c.bench_function("nn/forward_9_64_64_2", |b| {
        b.iter(|| net.forward(black_box(&x)).unwrap())
    });
    let mut grads = vec![0.0; net.params.len()];
    c.bench_function("nn/forward_backward_9_64_64_2", |b| {
        b.iter(|| {
            let cache = net.forward_cached(black_box(&x)).unwrap();
            grads.fill(0.0);
            net.backward(&cache, &[1.0, -0.5], &mut grads).unwrap()
        })
    });
}

fn bench_estimators(c: &mut Criterion) {
    let rewards: Vec<f64> = (0..1024).map(|i| ((i * 7) % 13) as f64 * 0.1).collect();
    let values: Vec<f64> = (0..1025).map(|i| ((i * 3) % 11) as f64 * 0.05).collect();
    c.bench_function("estimators/gae_1024", |b| {
        b.iter(|| gae_advantages(black_box(&rewards), &values, 0.99, 0.95).unwrap())
    });
}

fn bench_rollouts(c: &mut Criterion) {
    let fixture = scpo_core::toys::build_gated_chain();
    let pi = UniformPolicy::new(2);
    c.bench_function("cmdp/rollout_gated_chain", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            rollout(black_box(&fixture.cmdp), &pi, DEFAULT_DELTA, seed).unwrap()
        })
    });
    c.bench_function("envs/point_run_episode", |b| {
        let mut env =
            scpo_core::envs::make_env("point_run", &std::collections::HashMap::new()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        b.iter(|| {
            env.reset(&mut rng);
            let mut total = 0.0;
            for i in 0..env.horizon() {
                let a = Action::Continuous(vec![(i as f64 * 0.1).sin(), 0.2]);
                total += env.step(&a).unwrap().reward;
            }
            total
        })
    });
}

criterion_group!(
    benches,
    bench_enumeration,
    bench_network,
    bench_estimators,
    bench_rollouts
);
criterion_main!(benches);
