//! Policy-layer properties: advantage estimation, gradients, checkpoints and
//! a PPO run on a problem with a known optimum.

use erfi_core::policy::checkpoint::{decode, encode};
use erfi_core::policy::{compute_gae, gaussian, ppo_update, Activation, Learner, PolicyParams, PpoConfig, RolloutBuffer};
use erfi_core::rng::{self, Rng};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng as _;

/// Advantage at `s` as the explicit discounted sum of TD residuals, cut at
/// the first episode end.
fn brute_force_advantage(r: &[f64], v: &[f64], d: &[bool], boot: f64, gamma: f64, lambda: f64, s: usize) -> f64 {
    let mut sum = 0.0;
    let mut weight = 1.0;
    for k in s..r.len() {
        let next = if d[k] {
            0.0
        } else if k + 1 < r.len() {
            v[k + 1]
        } else {
            boot
        };
        sum += weight * (r[k] + gamma * next - v[k]);
        if d[k] {
            break;
        }
        weight *= gamma * lambda;
    }
    sum
}

fn episode() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<bool>)> {
    (1..=6usize).prop_flat_map(|t| {
        (
            proptest::collection::vec(-5.0..5.0f64, t),
            proptest::collection::vec(-5.0..5.0f64, t),
            proptest::collection::vec(any::<bool>(), t),
        )
    })
}

proptest! {
    #[test]
    fn gae_matches_brute_force(
        (r, v, d) in episode(),
        boot in -5.0..5.0f64,
        gamma in 0.0..=1.0f64,
        lambda in 0.0..=1.0f64,
    ) {
        let (adv, ret) = compute_gae(&r, &v, &d, boot, gamma, lambda);
        for s in 0..r.len() {
            let expected = brute_force_advantage(&r, &v, &d, boot, gamma, lambda, s);
            prop_assert!((adv[s] - expected).abs() < 1e-12, "step {s}: {} vs {expected}", adv[s]);
            prop_assert!((ret[s] - adv[s] - v[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trips(seed in any::<u64>(), hidden in 1..12usize, inputs in 1..8usize, outputs in 1..5usize) {
        let mut rng = rng::stream(seed, 0);
        let p = PolicyParams::init(&mut rng, &[inputs, hidden, outputs], outputs, 0.5, 0.1);
        let bytes = encode(&p).unwrap();
        prop_assert_eq!(decode(&bytes).unwrap(), p);
        prop_assert!(decode(&bytes[..bytes.len() - 1]).is_err());
    }
}

fn finite_difference_check(activation: Activation, probes: usize, seed: u64) -> f64 {
    let mut rng = rng::stream(seed, 1);
    let mut net = PolicyParams::init(&mut rng, &[6, 10, 7, 3], 3, 1.0, 1.0);
    net.activation = activation;
    let x = Array2::from_shape_fn((5, 6), |_| rng.random_range(-1.5..1.5));
    let w = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
    let loss = |p: &PolicyParams| (p.predict(x.view()).unwrap() * &w).sum();
    let (_, cache) = net.forward(x.view()).unwrap();
    let grads = net.backward(&cache, w.view()).unwrap();
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let layer = rng.random_range(0..net.weights.len());
        let mut p = net.clone();
        let (exact, numeric) = if rng.random_bool(0.8) {
            let (r, c) = net.weights[layer].dim();
            let (i, j) = (rng.random_range(0..r), rng.random_range(0..c));
            p.weights[layer][(i, j)] += h;
            let up = loss(&p);
            p.weights[layer][(i, j)] -= 2.0 * h;
            (grads.weights[layer][(i, j)], (up - loss(&p)) / (2.0 * h))
        } else {
            let i = rng.random_range(0..net.biases[layer].len());
            p.biases[layer][i] += h;
            let up = loss(&p);
            p.biases[layer][i] -= 2.0 * h;
            (grads.biases[layer][i], (up - loss(&p)) / (2.0 * h))
        };
        worst = worst.max((numeric - exact).abs() / exact.abs().max(numeric.abs()).max(1e-6));
    }
    worst
}

#[test]
fn backprop_matches_central_differences_tanh() {
    let worst = finite_difference_check(Activation::Tanh, 1000, 3);
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

#[test]
fn backprop_matches_central_differences_elu() {
    let worst = finite_difference_check(Activation::Elu, 1000, 4);
    assert!(worst < 1e-4, "max relative error {worst:e}");
}

/// One-step episodes with reward `-(a - target)²`: the optimal mean action
/// is the target regardless of observation.
fn bandit_rollout(learner: &Learner, rng: &mut Rng, cfg: &PpoConfig, target: f64) -> RolloutBuffer {
    let mut buf = RolloutBuffer::new(cfg.num_envs, cfg.horizon, 1, 1);
    buf.observations.fill(1.0);
    let mean = learner.actor.predict(buf.observations.view()).unwrap();
    let values = learner.critic.predict(buf.observations.view()).unwrap();
    let log_std = learner.actor.log_std.to_vec();
    for i in 0..buf.len() {
        let a = gaussian::sample(rng, &[mean[(i, 0)]], &log_std);
        buf.actions[(i, 0)] = a[0];
        buf.log_probs[i] = gaussian::log_prob(&a, &[mean[(i, 0)]], &log_std);
        buf.rewards[i] = -(a[0] - target).powi(2);
        buf.values[i] = values[(i, 0)];
        buf.dones[i] = true;
    }
    buf.compute_advantages(cfg.gamma, cfg.lambda);
    buf
}

#[test]
fn ppo_solves_a_gaussian_bandit() {
    let cfg = PpoConfig {
        num_envs: 32,
        horizon: 4,
        epochs: 4,
        minibatches: 2,
        learning_rate: 3e-3,
        entropy_coef: 0.0,
        hidden: vec![8],
        initial_std: 0.5,
        ..PpoConfig::default()
    };
    let target = 0.7;
    let mut rng = rng::stream(11, 0);
    let mut learner = Learner::init(&mut rng, 1, 1, &cfg);
    for _ in 0..300 {
        let buf = bandit_rollout(&learner, &mut rng, &cfg, target);
        ppo_update(&mut learner, &buf, &cfg, &mut rng).unwrap();
    }
    let mean = learner.actor.predict(Array2::ones((1, 1)).view()).unwrap()[(0, 0)];
    assert!((mean - target).abs() < 0.05, "mean action {mean}");
    assert!(learner.actor.log_std[0] < 0.5f64.ln(), "exploration should shrink");
}
