//! Position-step experiment on a single gravity-free joint, showing how
//! per-step injection randomizes rise and settling times while an episodic
//! offset shifts the settling point.

use serde::{Deserialize, Serialize};

use super::{compute_torque, sample_episode_offset, sample_step_injection, ImpedanceGains, InjectionMode};
use crate::rbd::{
    step_dynamics, BaseKind, Body, ContactParams, ExternalWrench, GeneralizedState, Joint, NoGround,
    Parent, RobotModel, Vec2,
};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct StepResponseConfig {
    pub kp: f64,
    pub kd: f64,
    /// rad
    pub step: f64,
    /// s
    pub duration: f64,
    /// Impedance period, s.
    pub dt: f64,
    pub mode: InjectionMode,
    pub tau_lim_r: f64,
    pub tau_lim_o: f64,
    /// Overrides the sampled episodic offset when set.
    pub fixed_offset: Option<f64>,
    /// Shank-like link driven by the joint.
    pub link_mass: f64,
    pub link_length: f64,
    pub torque_limit: f64,
}

impl Default for StepResponseConfig {
    fn default() -> Self {
        Self {
            kp: 15.0,
            kd: 1.0,
            step: 0.17,
            duration: 2.0,
            dt: 0.0025,
            mode: InjectionMode::None,
            tau_lim_r: 0.0,
            tau_lim_o: 0.0,
            fixed_offset: None,
            link_mass: 1.0,
            link_length: 0.3,
            torque_limit: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseSample {
    pub seed: u64,
    pub t: f64,
    pub q: f64,
    pub q_desired: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub seed: u64,
    /// 10 % → 90 % of the commanded step; `None` if 90 % is never reached.
    pub rise_time_s: Option<f64>,
    /// Time after which the response stays within ±5 % of the step around
    /// its final value.
    pub settling_time_s: Option<f64>,
    /// Final value minus the commanded position.
    pub steady_state_offset_rad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

impl Stat {
    fn of(values: impl Iterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.collect();
        let count = v.len();
        if count == 0 {
            return Self::default();
        }
        let mean = v.iter().sum::<f64>() / count as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / count as f64;
        Self {
            mean,
            std: var.sqrt(),
            count,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepSummary {
    pub rise_time: Stat,
    pub settling_time: Stat,
    pub steady_state_offset: Stat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResponseReport {
    pub trajectories: Vec<Vec<ResponseSample>>,
    pub metrics: Vec<StepMetrics>,
    pub summary: StepSummary,
}

fn joint_model(cfg: &StepResponseConfig) -> RobotModel {
    let l = cfg.link_length;
    RobotModel::new(
        BaseKind::Fixed {
            x: 0.0,
            z: 0.0,
            pitch: 0.0,
        },
        Body {
            mass: 1.0,
            inertia: 1.0,
            length: 1.0,
            com: Vec2::zeros(),
        },
        vec![Body {
            mass: cfg.link_mass,
            inertia: cfg.link_mass * l * l / 12.0,
            length: l,
            com: Vec2::new(0.0, -l / 2.0),
        }],
        vec![Joint {
            name: "knee".into(),
            parent: Parent::Base,
            offset: Vec2::zeros(),
            lower: -std::f64::consts::PI,
            upper: std::f64::consts::PI,
            velocity_limit: 1e3,
            torque_limit: cfg.torque_limit,
            nominal: 0.0,
        }],
        vec![],
        vec![],
        ContactParams::default(),
    )
    .expect("step-response joint model is valid")
}

fn metrics(seed: u64, traj: &[ResponseSample], step: f64) -> StepMetrics {
    let q_desired = traj[0].q_desired;
    let tail = (traj.len() / 10).max(1);
    let final_value = traj[traj.len() - tail..].iter().map(|s| s.q).sum::<f64>() / tail as f64;
    let crossing = |frac: f64| {
        let level = frac * step;
        traj.windows(2).find_map(|w| {
            let (a, b) = (w[0].q * step.signum(), w[1].q * step.signum());
            let level = level * step.signum();
            (a < level && b >= level).then(|| w[0].t + (w[1].t - w[0].t) * (level - a) / (b - a))
        })
    };
    let rise_time_s = match (crossing(0.1), crossing(0.9)) {
        (Some(t10), Some(t90)) => Some(t90 - t10),
        _ => None,
    };
    let band = 0.05 * step.abs();
    let settling_time_s = match traj.iter().rposition(|s| (s.q - final_value).abs() > band) {
        None => Some(0.0),
        Some(i) if i + 1 < traj.len() => Some(traj[i + 1].t),
        Some(_) => None,
    };
    StepMetrics {
        seed,
        rise_time_s,
        settling_time_s,
        steady_state_offset_rad: final_value - q_desired,
    }
}

/// Runs the step experiment once per seed.
pub fn run_step_response(cfg: &StepResponseConfig, seeds: &[u64]) -> StepResponseReport {
    let model = joint_model(cfg);
    let gains = ImpedanceGains {
        kp: vec![cfg.kp],
        kd: vec![cfg.kd],
    };
    let steps = (cfg.duration / cfg.dt).round() as usize;
    let limits = [cfg.torque_limit];
    let q_desired = [cfg.step];
    let mut trajectories = Vec::with_capacity(seeds.len());
    let mut all_metrics = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut rng = rng::stream(seed, 0);
        let offset = match (cfg.mode.episodic(), cfg.fixed_offset) {
            (true, Some(o)) => vec![o],
            (true, None) => sample_episode_offset(&mut rng, cfg.tau_lim_o, 1, 0.0, 0.0).joint,
            (false, _) => vec![0.0],
        };
        let r_lim = if cfg.mode.per_step() { cfg.tau_lim_r } else { 0.0 };
        let mut state = GeneralizedState::at_rest(vec![0.0]);
        let mut traj = Vec::with_capacity(steps + 1);
        for _ in 0..steps {
            let tau_r = sample_step_injection(&mut rng, r_lim, 1);
            let tau = compute_torque(&gains, &q_desired, &state.q, &state.u, &tau_r, &offset, &limits);
            traj.push(ResponseSample {
                seed,
                t: state.time,
                q: state.q[0],
                q_desired: cfg.step,
                tau: tau[0],
            });
            state = step_dynamics(&model, &state, &tau, &ExternalWrench::none(), &NoGround, 0.0, cfg.dt)
                .expect("single joint cannot diverge at bounded torque")
                .state;
        }
        traj.push(ResponseSample {
            seed,
            t: state.time,
            q: state.q[0],
            q_desired: cfg.step,
            tau: 0.0,
        });
        all_metrics.push(metrics(seed, &traj, cfg.step));
        trajectories.push(traj);
    }
    let summary = StepSummary {
        rise_time: Stat::of(all_metrics.iter().filter_map(|m| m.rise_time_s)),
        settling_time: Stat::of(all_metrics.iter().filter_map(|m| m.settling_time_s)),
        steady_state_offset: Stat::of(all_metrics.iter().map(|m| m.steady_state_offset_rad)),
    };
    StepResponseReport {
        trajectories,
        metrics: all_metrics,
        summary,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_baseline_has_no_spread() {
        let cfg = StepResponseConfig::default();
        let seeds: Vec<u64> = (0..5).collect();
        let r = run_step_response(&cfg, &seeds);
        assert_eq!(r.summary.rise_time.std, 0.0);
        assert_eq!(r.summary.settling_time.std, 0.0);
        assert!(r.metrics[0].rise_time_s.unwrap() > 0.0);
        assert!(r.summary.steady_state_offset.mean.abs() < 1e-6);
    }

    #[test]
    fn offset_shifts_steady_state() {
        // closed form: K_p (q* − q) + τ_o = 0  ⇒  q − q* = τ_o / K_p
        let cfg = StepResponseConfig {
            mode: InjectionMode::Rao,
            fixed_offset: Some(5.0),
            duration: 3.0,
            ..Default::default()
        };
        let r = run_step_response(&cfg, &[0]);
        assert!((r.metrics[0].steady_state_offset_rad - 5.0 / 15.0).abs() < 1e-3);
    }

    #[test]
    fn per_step_injection_spreads_rise_time() {
        let cfg = StepResponseConfig {
            mode: InjectionMode::Rfi,
            tau_lim_r: 10.0,
            ..Default::default()
        };
        let seeds: Vec<u64> = (0..20).collect();
        let r = run_step_response(&cfg, &seeds);
        assert_eq!(r.summary.rise_time.count, 20);
        assert!(r.summary.rise_time.std > 0.0);
    }
}
