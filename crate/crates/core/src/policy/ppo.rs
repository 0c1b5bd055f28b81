//! Clipped-surrogate policy optimization.

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use super::gae::{compute_gae, normalize};
use super::gaussian;
use super::mlp::{Gradients, PolicyParams};
use super::{Adam, PolicyError};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub num_envs: usize,
    /// Policy steps per environment per iteration.
    pub horizon: usize,
    pub epochs: usize,
    pub minibatches: usize,
    pub clip: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Applied separately to the actor and critic gradients.
    pub max_grad_norm: f64,
    pub iterations: usize,
    pub hidden: Vec<usize>,
    pub initial_std: f64,
    /// Multiplies environment rewards before advantage estimation.
    pub reward_scale: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            num_envs: 64,
            horizon: 24,
            epochs: 5,
            minibatches: 4,
            clip: 0.2,
            gamma: 0.99,
            lambda: 0.95,
            learning_rate: 3e-4,
            entropy_coef: 0.005,
            value_coef: 1.0,
            max_grad_norm: 1.0,
            iterations: 1500,
            hidden: vec![128, 64],
            initial_std: 0.8,
            reward_scale: 0.02,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |m: &str| Err(PolicyError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must be in [0, 1]");
        }
        if !(self.clip > 0.0) {
            return bad("clip must be > 0");
        }
        if self.num_envs == 0 || self.horizon == 0 || self.epochs == 0 || self.minibatches == 0 {
            return bad("num_envs, horizon, epochs and minibatches must be >= 1");
        }
        if self.minibatches > self.num_envs * self.horizon {
            return bad("more minibatches than samples");
        }
        if !(self.learning_rate >= 0.0 && self.max_grad_norm > 0.0 && self.initial_std > 0.0) {
            return bad("learning rate >= 0, gradient cap > 0 and initial std > 0 required");
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be >= 1");
        }
        Ok(())
    }
}

/// Rectangular rollout storage, time-major: sample `t * num_envs + e`.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub num_envs: usize,
    pub horizon: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub observations: Array2<f64>,
    pub actions: Array2<f64>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    /// Value of the state after the last step, per environment.
    pub bootstrap: Vec<f64>,
    /// Filled by [`RolloutBuffer::compute_advantages`].
    pub advantages: Option<Vec<f64>>,
    pub returns: Option<Vec<f64>>,
}

impl RolloutBuffer {
    pub fn new(num_envs: usize, horizon: usize, obs_dim: usize, action_dim: usize) -> Self {
        let n = num_envs * horizon;
        Self {
            num_envs,
            horizon,
            obs_dim,
            action_dim,
            observations: Array2::zeros((n, obs_dim)),
            actions: Array2::zeros((n, action_dim)),
            log_probs: vec![0.0; n],
            rewards: vec![0.0; n],
            values: vec![0.0; n],
            dones: vec![false; n],
            bootstrap: vec![0.0; num_envs],
            advantages: None,
            returns: None,
        }
    }

    pub fn len(&self) -> usize {
        self.num_envs * self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-environment GAE, then advantages normalized over the whole
    /// buffer.
    pub fn compute_advantages(&mut self, gamma: f64, lambda: f64) {
        let (e_n, h) = (self.num_envs, self.horizon);
        let mut adv = vec![0.0; self.len()];
        let mut ret = vec![0.0; self.len()];
        for e in 0..e_n {
            let pick = |v: &[f64]| (0..h).map(|t| v[t * e_n + e]).collect::<Vec<_>>();
            let dones: Vec<bool> = (0..h).map(|t| self.dones[t * e_n + e]).collect();
            let (a, r) = compute_gae(
                &pick(&self.rewards),
                &pick(&self.values),
                &dones,
                self.bootstrap[e],
                gamma,
                lambda,
            );
            for t in 0..h {
                adv[t * e_n + e] = a[t];
                ret[t * e_n + e] = r[t];
            }
        }
        normalize(&mut adv);
        self.advantages = Some(adv);
        self.returns = Some(ret);
    }
}

/// Actor, critic and their optimizer state.
#[derive(Debug, Clone)]
pub struct Learner {
    pub actor: PolicyParams,
    pub critic: PolicyParams,
    actor_opt: Adam,
    critic_opt: Adam,
}

impl Learner {
    pub fn new(actor: PolicyParams, critic: PolicyParams) -> Self {
        Self {
            actor_opt: Adam::new(&actor),
            critic_opt: Adam::new(&critic),
            actor,
            critic,
        }
    }

    pub fn init(rng: &mut Rng, obs_dim: usize, action_dim: usize, config: &PpoConfig) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend(&config.hidden);
        let mut actor_sizes = sizes.clone();
        actor_sizes.push(action_dim);
        let mut critic_sizes = sizes;
        critic_sizes.push(1);
        let actor = PolicyParams::init(rng, &actor_sizes, action_dim, config.initial_std, 0.01);
        let critic = PolicyParams::init(rng, &critic_sizes, 0, 1.0, 1.0);
        Self::new(actor, critic)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UpdateStats {
    /// Clipped surrogate over the full buffer before any parameter change.
    pub initial_surrogate: f64,
    /// Means over all minibatch steps.
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

fn clip_norm(g: &mut Gradients, cap: f64) {
    let norm = g.squared_norm().sqrt();
    if norm > cap {
        g.scale(cap / norm);
    }
}

struct MinibatchResult {
    surrogate: f64,
    value_loss: f64,
    entropy: f64,
    approx_kl: f64,
    clip_fraction: f64,
    actor_grad: Gradients,
    critic_grad: Gradients,
}

fn minibatch(
    learner: &Learner,
    buf: &RolloutBuffer,
    idx: &[usize],
    config: &PpoConfig,
) -> Result<MinibatchResult, PolicyError> {
    let adv = buf.advantages.as_ref().ok_or(PolicyError::MissingAdvantages)?;
    let ret = buf.returns.as_ref().ok_or(PolicyError::MissingAdvantages)?;
    let b = idx.len() as f64;
    let obs = buf.observations.select(Axis(0), idx);
    let actions = buf.actions.select(Axis(0), idx);
    let (mean, actor_cache) = learner.actor.forward(obs.view())?;
    let (value, critic_cache) = learner.critic.forward(obs.view())?;
    let log_std = learner.actor.log_std.as_slice().unwrap();
    let std: Vec<f64> = log_std.iter().map(|s| s.exp()).collect();
    let ad = buf.action_dim;

    let mut d_mean = Array2::<f64>::zeros(mean.raw_dim());
    let mut d_log_std = vec![0.0; ad];
    let mut d_value = Array2::<f64>::zeros(value.raw_dim());
    let (mut surrogate, mut value_loss, mut kl, mut clipped) = (0.0, 0.0, 0.0, 0.0);
    for (row, &i) in idx.iter().enumerate() {
        let a = actions.row(row);
        let m = mean.row(row);
        let logp = gaussian::log_prob(a.as_slice().unwrap(), m.as_slice().unwrap(), log_std);
        let log_ratio = logp - buf.log_probs[i];
        let ratio = log_ratio.exp();
        let ratio_c = ratio.clamp(1.0 - config.clip, 1.0 + config.clip);
        let (u, c) = (ratio * adv[i], ratio_c * adv[i]);
        surrogate += u.min(c) / b;
        kl += ((ratio - 1.0) - log_ratio) / b;
        if (ratio - 1.0).abs() > config.clip {
            clipped += 1.0 / b;
        }
        // Loss is −surrogate; the unclipped branch carries the gradient.
        if u <= c {
            let d_logp = -adv[i] * ratio / b;
            for k in 0..ad {
                let z = (a[k] - m[k]) / std[k];
                d_mean[[row, k]] += d_logp * z / std[k];
                d_log_std[k] += d_logp * (z * z - 1.0);
            }
        }
        let err = value[[row, 0]] - ret[i];
        value_loss += err * err / b;
        d_value[[row, 0]] = config.value_coef * 2.0 * err / b;
    }
    let entropy = gaussian::entropy(log_std);
    let mut actor_grad = learner.actor.backward(&actor_cache, d_mean.view())?;
    for k in 0..ad {
        actor_grad.log_std[k] = d_log_std[k] - config.entropy_coef;
    }
    let critic_grad = learner.critic.backward(&critic_cache, d_value.view())?;
    Ok(MinibatchResult {
        surrogate,
        value_loss,
        entropy,
        approx_kl: kl,
        clip_fraction: clipped,
        actor_grad,
        critic_grad,
    })
}

/// Runs `config.epochs` passes of shuffled minibatch updates over `buf`.
pub fn ppo_update(
    learner: &mut Learner,
    buf: &RolloutBuffer,
    config: &PpoConfig,
    rng: &mut Rng,
) -> Result<UpdateStats, PolicyError> {
    let all: Vec<usize> = (0..buf.len()).collect();
    let initial = minibatch(learner, buf, &all, config)?;
    let mut stats = UpdateStats {
        initial_surrogate: initial.surrogate,
        ..Default::default()
    };
    let mut order = all;
    let size = buf.len() / config.minibatches;
    let mut count = 0.0;
    for _ in 0..config.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(size).take(config.minibatches) {
            let mut r = minibatch(learner, buf, chunk, config)?;
            let loss = -r.surrogate + config.value_coef * r.value_loss;
            if !loss.is_finite() || !r.actor_grad.is_finite() || !r.critic_grad.is_finite() {
                return Err(PolicyError::NonFinite(format!("loss {loss}")));
            }
            clip_norm(&mut r.actor_grad, config.max_grad_norm);
            clip_norm(&mut r.critic_grad, config.max_grad_norm);
            learner.actor_opt.step(&mut learner.actor, &r.actor_grad, config.learning_rate);
            learner.critic_opt.step(&mut learner.critic, &r.critic_grad, config.learning_rate);
            stats.surrogate += r.surrogate;
            stats.value_loss += r.value_loss;
            stats.entropy += r.entropy;
            stats.approx_kl += r.approx_kl;
            stats.clip_fraction += r.clip_fraction;
            count += 1.0;
        }
    }
    stats.surrogate /= count;
    stats.value_loss /= count;
    stats.entropy /= count;
    stats.approx_kl /= count;
    stats.clip_fraction /= count;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn toy_buffer(rng: &mut Rng, learner: &Learner) -> RolloutBuffer {
        let mut buf = RolloutBuffer::new(8, 4, 3, 2);
        for i in 0..buf.len() {
            for k in 0..3 {
                buf.observations[[i, k]] = (i * 3 + k) as f64 * 0.01;
            }
            let obs = buf.observations.row(i).insert_axis(Axis(0)).to_owned();
            let mean = learner.actor.predict(obs.view()).unwrap();
            let ls = learner.actor.log_std.as_slice().unwrap();
            let a = gaussian::sample(rng, mean.row(0).as_slice().unwrap(), ls);
            buf.log_probs[i] = gaussian::log_prob(&a, mean.row(0).as_slice().unwrap(), ls);
            buf.actions.row_mut(i).assign(&ndarray::Array1::from(a));
            buf.rewards[i] = (i % 5) as f64 - 2.0;
        }
        buf.compute_advantages(0.99, 0.95);
        buf
    }

    #[test]
    fn fresh_buffer_ratio_is_one() {
        let mut rng = stream(0, 0);
        let config = PpoConfig {
            hidden: vec![8],
            ..Default::default()
        };
        let mut learner = Learner::init(&mut rng, 3, 2, &config);
        let buf = toy_buffer(&mut rng, &learner);
        let mean_adv = buf.advantages.as_ref().unwrap().iter().sum::<f64>() / buf.len() as f64;
        let stats = ppo_update(&mut learner, &buf, &config, &mut rng).unwrap();
        assert!((stats.initial_surrogate - mean_adv).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let mut rng = stream(0, 0);
        let config = PpoConfig {
            hidden: vec![8],
            learning_rate: 0.0,
            ..Default::default()
        };
        let mut learner = Learner::init(&mut rng, 3, 2, &config);
        let before = learner.clone();
        let buf = toy_buffer(&mut rng, &learner);
        ppo_update(&mut learner, &buf, &config, &mut rng).unwrap();
        assert_eq!(learner.actor, before.actor);
        assert_eq!(learner.critic, before.critic);
    }

    #[test]
    fn missing_advantages_rejected() {
        let mut rng = stream(0, 0);
        let config = PpoConfig {
            hidden: vec![8],
            ..Default::default()
        };
        let mut learner = Learner::init(&mut rng, 3, 2, &config);
        let buf = RolloutBuffer::new(2, 2, 3, 2);
        assert!(matches!(
            ppo_update(&mut learner, &buf, &config, &mut rng),
            Err(PolicyError::MissingAdvantages)
        ));
    }
}
