//! Parallel-environment training loop.

use std::collections::VecDeque;
use std::io::Write;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::ppo::{ppo_update, Learner, PpoConfig, RolloutBuffer};
use super::{gaussian, Controller, PolicyError, PolicyParams};
use crate::actuation::{assign_injection_modes, InjectionStrategy};
use crate::env::{observation_scale, Command, EpisodeConfig, LocomotionEnv, Outcome};
use crate::par;
use crate::rbd::RobotModel;
use crate::rng::{self, Rng};

const STREAM_ENV: u64 = 1;
const STREAM_ACTION: u64 = 2;
const STREAM_INIT: u64 = 3;
const STREAM_SHUFFLE: u64 = 4;
const EPISODE_WINDOW: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub episode: EpisodeConfig,
    pub ppo: PpoConfig,
    pub strategy: InjectionStrategy,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let mut episode = EpisodeConfig::default();
        episode.injection.strategy = InjectionStrategy::Erfi50;
        Self {
            episode,
            ppo: PpoConfig::default(),
            strategy: InjectionStrategy::Erfi50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub iteration: usize,
    /// Unscaled reward per policy step.
    pub mean_reward: f64,
    /// Policy steps, over the most recent completed episodes.
    pub mean_episode_len: f64,
    /// Base velocity along the commanded direction, m/s.
    pub mean_speed: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub policy: PolicyParams,
    pub critic: PolicyParams,
    pub curve: Vec<TrainingRecord>,
}

struct Slot {
    env: LocomotionEnv,
    noise: Rng,
    obs: Vec<f64>,
    episode_len: usize,
    // per-step outputs
    action: Vec<f64>,
    log_prob: f64,
    reward: f64,
    done: bool,
    terminal_obs: Option<Vec<f64>>,
    finished_len: Option<usize>,
    diverged: bool,
}

fn scaled(obs: &[f64], scale: &[f64]) -> Vec<f64> {
    obs.iter().zip(scale).map(|(o, s)| o * s).collect()
}

fn rows(vs: &[&[f64]], dim: usize) -> Array2<f64> {
    let mut m = Array2::zeros((vs.len(), dim));
    for (i, v) in vs.iter().enumerate() {
        m.row_mut(i).assign(&ndarray::ArrayView1::from(*v));
    }
    m
}

/// Trains a policy on `model`. `progress` sees every record as it is made.
pub fn train(
    model: &RobotModel,
    config: &TrainConfig,
    mut progress: impl FnMut(&TrainingRecord),
) -> Result<TrainOutput, PolicyError> {
    let ppo = &config.ppo;
    ppo.validate()?;
    let mut episode = config.episode.clone();
    episode.injection.strategy = config.strategy;
    let joints = model.num_joints();
    let obs_dim = episode.observation.len(joints);
    let scale = observation_scale(episode.observation, joints);
    let seed = config.seed;

    let mut learner = Learner::init(
        &mut rng::stream(seed, rng::key(&[STREAM_INIT])),
        obs_dim,
        joints,
        ppo,
    );
    let mut shuffle = rng::stream(seed, rng::key(&[STREAM_SHUFFLE]));
    let modes = assign_injection_modes(ppo.num_envs, config.strategy);
    let mut slots = modes
        .iter()
        .enumerate()
        .map(|(i, &mode)| {
            let env = LocomotionEnv::new(
                episode.clone(),
                model.clone(),
                mode,
                rng::stream(seed, rng::key(&[STREAM_ENV, i as u64])),
            )?;
            let obs = scaled(&env.observation(), &scale);
            Ok(Slot {
                env,
                noise: rng::stream(seed, rng::key(&[STREAM_ACTION, i as u64])),
                obs,
                episode_len: 0,
                action: vec![0.0; joints],
                log_prob: 0.0,
                reward: 0.0,
                done: false,
                terminal_obs: None,
                finished_len: None,
                diverged: false,
            })
        })
        .collect::<Result<Vec<_>, crate::env::EnvError>>()
        .map_err(|e| PolicyError::Config(e.to_string()))?;

    let mut curve = Vec::with_capacity(ppo.iterations);
    let mut recent: VecDeque<usize> = VecDeque::with_capacity(EPISODE_WINDOW);
    let n_env = ppo.num_envs;
    for iteration in 0..ppo.iterations {
        let mut buf = RolloutBuffer::new(n_env, ppo.horizon, obs_dim, joints);
        let (mut reward_sum, mut speed_sum) = (0.0, 0.0);
        let mut diverged = vec![false; n_env];
        for t in 0..ppo.horizon {
            let obs = rows(&slots.iter().map(|s| s.obs.as_slice()).collect::<Vec<_>>(), obs_dim);
            let means = learner.actor.predict(obs.view())?;
            let values = learner.critic.predict(obs.view())?;
            let log_std = learner.actor.log_std.to_vec();
            par::for_each_mut(&mut slots, |i, slot| {
                let mean = means.row(i);
                let mean = mean.as_slice().unwrap();
                slot.action = gaussian::sample(&mut slot.noise, mean, &log_std);
                slot.log_prob = gaussian::log_prob(&slot.action, mean, &log_std);
                let tr = slot.env.step(&slot.action);
                slot.reward = tr.reward.total;
                slot.diverged = tr.diagnostic.is_some();
                slot.episode_len += 1;
                slot.done = tr.outcome != Outcome::Running;
                slot.terminal_obs = None;
                slot.finished_len = None;
                if slot.done {
                    if tr.outcome == Outcome::Timeout {
                        slot.terminal_obs = Some(scaled(&tr.observation, &scale));
                    }
                    slot.finished_len = Some(slot.episode_len);
                    slot.episode_len = 0;
                    let obs = slot.env.reset().expect("configuration validated at construction");
                    slot.obs = scaled(&obs, &scale);
                } else {
                    slot.obs = scaled(&tr.observation, &scale);
                }
            });
            let timed_out: Vec<usize> = (0..n_env)
                .filter(|&i| slots[i].terminal_obs.is_some())
                .collect();
            let terminal_values = if timed_out.is_empty() {
                Array2::zeros((0, 1))
            } else {
                let term: Vec<&[f64]> = timed_out
                    .iter()
                    .map(|&i| slots[i].terminal_obs.as_deref().unwrap())
                    .collect();
                learner.critic.predict(rows(&term, obs_dim).view())?
            };
            for (i, slot) in slots.iter().enumerate() {
                let k = t * n_env + i;
                buf.observations.row_mut(k).assign(&obs.row(i));
                buf.actions.row_mut(k).assign(&Array1::from(slot.action.clone()));
                buf.log_probs[k] = slot.log_prob;
                buf.values[k] = values[[i, 0]];
                buf.dones[k] = slot.done;
                let mut r = ppo.reward_scale * slot.reward;
                if let Some(j) = timed_out.iter().position(|&x| x == i) {
                    r += ppo.gamma * terminal_values[[j, 0]];
                }
                buf.rewards[k] = r;
                reward_sum += slot.reward;
                speed_sum += slot.env.state.u[0] * slot.env.command.v_x.signum();
                diverged[i] |= slot.diverged;
                if let Some(len) = slot.finished_len {
                    if recent.len() == EPISODE_WINDOW {
                        recent.pop_front();
                    }
                    recent.push_back(len);
                }
            }
        }
        let n_diverged = diverged.iter().filter(|d| **d).count();
        if 2 * n_diverged > n_env {
            return Err(PolicyError::Diverged {
                iteration,
                envs: n_diverged,
            });
        }
        let obs = rows(&slots.iter().map(|s| s.obs.as_slice()).collect::<Vec<_>>(), obs_dim);
        let boot = learner.critic.predict(obs.view())?;
        buf.bootstrap = boot.column(0).to_vec();
        buf.compute_advantages(ppo.gamma, ppo.lambda);
        ppo_update(&mut learner, &buf, ppo, &mut shuffle)?;

        let samples = (n_env * ppo.horizon) as f64;
        let mean_len = if recent.is_empty() {
            slots.iter().map(|s| s.episode_len as f64).sum::<f64>() / n_env as f64
        } else {
            recent.iter().sum::<usize>() as f64 / recent.len() as f64
        };
        let record = TrainingRecord {
            iteration,
            mean_reward: reward_sum / samples,
            mean_episode_len: mean_len,
            mean_speed: speed_sum / samples,
        };
        progress(&record);
        curve.push(record);
    }
    Ok(TrainOutput {
        policy: learner.actor,
        critic: learner.critic,
        curve,
    })
}

/// Writes `iteration, mean_reward, mean_episode_len, mean_speed`.
pub fn write_training_curve<W: Write>(records: &[TrainingRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(["iteration", "mean_reward", "mean_episode_len", "mean_speed"])?;
    }
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_training_curve<R: std::io::Read>(input: R) -> csv::Result<Vec<TrainingRecord>> {
    csv::Reader::from_reader(input).deserialize().collect()
}

/// Mean forward speed of the deterministic policy at a fixed command on the
/// episode's terrain: displacement over elapsed time, a fall ending the
/// rollout early.
pub fn evaluate_forward_speed(
    policy: &PolicyParams,
    model: &RobotModel,
    episode: &EpisodeConfig,
    command: f64,
    duration: f64,
    episodes: usize,
    seed: u64,
) -> Result<f64, PolicyError> {
    let controller = Controller::new(policy.clone(), episode.observation)?;
    let speeds = (0..episodes)
        .map(|k| {
            let mut env = LocomotionEnv::new(
                EpisodeConfig {
                    max_duration: duration,
                    ..episode.clone()
                },
                model.clone(),
                crate::actuation::InjectionMode::None,
                rng::stream(seed, rng::key(&[k as u64])),
            )
            .map_err(|e| PolicyError::Config(e.to_string()))?;
            let mut obs = env.reset_with(
                env.model.clone(),
                env.gains.clone(),
                env.terrain.clone(),
                Command::forward(command),
                env.perturbation.clone(),
            );
            loop {
                let action = controller.act(&obs)?;
                let tr = env.step(&action);
                obs = tr.observation;
                if tr.outcome != Outcome::Running {
                    break;
                }
            }
            Ok(env.distance() / duration)
        })
        .collect::<Result<Vec<f64>, PolicyError>>()?;
    Ok(speeds.iter().sum::<f64>() / speeds.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rbd::{build_model, ModelParams};

    #[test]
    fn zero_iterations_returns_initial_params() {
        let model = build_model(&ModelParams::default()).unwrap();
        let config = TrainConfig {
            ppo: PpoConfig {
                iterations: 0,
                num_envs: 2,
                ..Default::default()
            },
            ..Default::default()
        };
        let a = train(&model, &config, |_| {}).unwrap();
        let learner = Learner::init(
            &mut rng::stream(0, rng::key(&[STREAM_INIT])),
            34,
            4,
            &config.ppo,
        );
        assert_eq!(a.policy, learner.actor);
        assert!(a.curve.is_empty());
    }

    #[test]
    fn curve_csv_round_trip() {
        let recs = vec![TrainingRecord {
            iteration: 3,
            mean_reward: 0.25,
            mean_episode_len: 12.5,
            mean_speed: -0.1,
        }];
        let mut buf = Vec::new();
        write_training_curve(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("iteration,mean_reward,mean_episode_len,mean_speed\n"));
        assert_eq!(read_training_curve(buf.as_slice()).unwrap(), recs);
        let mut empty = Vec::new();
        write_training_curve(&[], &mut empty).unwrap();
        assert_eq!(
            String::from_utf8(empty).unwrap(),
            "iteration,mean_reward,mean_episode_len,mean_speed\n"
        );
    }
}
