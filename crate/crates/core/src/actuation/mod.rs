//! Joint impedance control with random torque injection.
//!
//! The controller tracks desired joint positions with
//! `τ = K_p (q* − q) − K_d q̇`, then adds a per-step random torque (RFI), an
//! episodic offset (RAO), or both (ERFI-C), before clamping to the actuator
//! limits. ERFI-50 splits parallel environments between RFI and RAO.

mod step_response;

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use thiserror::Error;

use crate::rbd::Vec2;
use crate::rng::Rng;

pub use step_response::{
    run_step_response, ResponseSample, StepMetrics, StepResponseConfig, StepResponseReport,
    StepSummary,
};

#[derive(Debug, Error, PartialEq)]
pub enum ActuationError {
    #[error("invalid gains: {0}")]
    Gains(String),
    #[error("injection limit `{name}` must be finite and non-negative, got {value}")]
    Limit { name: &'static str, value: f64 },
    #[error("unknown injection strategy `{0}`")]
    UnknownStrategy(String),
}

/// Per-joint position and velocity gains.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpedanceGains {
    /// N·m/rad
    pub kp: Vec<f64>,
    /// N·m·s/rad
    pub kd: Vec<f64>,
}

impl ImpedanceGains {
    pub fn uniform(kp: f64, kd: f64, joints: usize) -> Result<Self, ActuationError> {
        let gains = Self {
            kp: vec![kp; joints],
            kd: vec![kd; joints],
        };
        gains.validate()?;
        Ok(gains)
    }

    pub fn validate(&self) -> Result<(), ActuationError> {
        if self.kp.len() != self.kd.len() {
            return Err(ActuationError::Gains("kp and kd lengths differ".into()));
        }
        if let Some(k) = self.kp.iter().find(|k| !(**k > 0.0 && k.is_finite())) {
            return Err(ActuationError::Gains(format!("kp must be > 0, got {k}")));
        }
        if let Some(k) = self.kd.iter().find(|k| !(**k >= 0.0 && k.is_finite())) {
            return Err(ActuationError::Gains(format!("kd must be >= 0, got {k}")));
        }
        Ok(())
    }

    pub fn scaled(&self, kp_scale: f64, kd_scale: f64) -> Self {
        Self {
            kp: self.kp.iter().map(|k| k * kp_scale).collect(),
            kd: self.kd.iter().map(|k| k * kd_scale).collect(),
        }
    }
}

/// Injection applied in a single environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InjectionMode {
    None,
    Rfi,
    Rao,
    ErfiC,
}

impl InjectionMode {
    /// Fresh random torque at every impedance step.
    pub fn per_step(self) -> bool {
        matches!(self, Self::Rfi | Self::ErfiC)
    }

    /// Constant offset drawn at episode reset.
    pub fn episodic(self) -> bool {
        matches!(self, Self::Rao | Self::ErfiC)
    }
}

/// Training-time strategy across all parallel environments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InjectionStrategy {
    None,
    Rfi,
    Rao,
    ErfiC,
    Erfi50,
}

impl InjectionStrategy {
    pub const ALL: [Self; 5] = [Self::None, Self::Rfi, Self::Rao, Self::ErfiC, Self::Erfi50];

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Rfi => "rfi",
            Self::Rao => "rao",
            Self::ErfiC => "erfi-c",
            Self::Erfi50 => "erfi-50",
        }
    }
}

impl fmt::Display for InjectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InjectionStrategy {
    type Err = ActuationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|m| m.name() == norm || m.name().replace('-', "") == norm)
            .ok_or_else(|| ActuationError::UnknownStrategy(s.to_string()))
    }
}

/// Injection strategy and magnitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InjectionConfig {
    pub strategy: InjectionStrategy,
    /// Per-step joint torque limit, N·m.
    pub tau_lim_r: f64,
    /// Episodic joint torque offset limit, N·m.
    pub tau_lim_o: f64,
    /// Base force limit, N. Zero disables base injection.
    pub base_force_lim: f64,
    /// Base pitch torque limit, N·m. Zero disables base injection.
    pub base_torque_lim: f64,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        Self {
            strategy: InjectionStrategy::Erfi50,
            tau_lim_r: 4.0,
            tau_lim_o: 4.0,
            base_force_lim: 0.0,
            base_torque_lim: 0.0,
        }
    }
}

/// Base mass of the reference robot on which base injection above
/// (5 N, 3 N·m) produced pronking gaits.
const PRONKING_REFERENCE_MASS: f64 = 54.0;
const PRONKING_FORCE: f64 = 5.0;
const PRONKING_TORQUE: f64 = 3.0;

impl InjectionConfig {
    pub fn none() -> Self {
        Self {
            strategy: InjectionStrategy::None,
            ..Self::default()
        }
    }

    pub fn with_strategy(strategy: InjectionStrategy) -> Self {
        Self {
            strategy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ActuationError> {
        for (name, value) in [
            ("tau_lim_r", self.tau_lim_r),
            ("tau_lim_o", self.tau_lim_o),
            ("base_force_lim", self.base_force_lim),
            ("base_torque_lim", self.base_torque_lim),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(ActuationError::Limit { name, value });
            }
        }
        Ok(())
    }

    /// Per-step limit in effect for `mode`.
    pub fn step_limit(&self, mode: InjectionMode) -> f64 {
        if mode.per_step() {
            self.tau_lim_r
        } else {
            0.0
        }
    }

    /// Episodic limit in effect for `mode`.
    pub fn offset_limit(&self, mode: InjectionMode) -> f64 {
        if mode.episodic() {
            self.tau_lim_o
        } else {
            0.0
        }
    }

    pub fn base_injection_enabled(&self) -> bool {
        self.base_force_lim > 0.0 || self.base_torque_lim > 0.0
    }

    /// Warning text when base injection exceeds the pronking thresholds
    /// scaled to a robot of `total_mass` kg.
    pub fn pronking_warning(&self, total_mass: f64) -> Option<String> {
        let scale = total_mass / PRONKING_REFERENCE_MASS;
        let (f_max, t_max) = (PRONKING_FORCE * scale, PRONKING_TORQUE * scale);
        (self.base_force_lim > f_max || self.base_torque_lim > t_max).then(|| {
            format!(
                "base injection limits ({} N, {} N·m) exceed pronking thresholds \
                 ({f_max:.2} N, {t_max:.2} N·m) for a {total_mass} kg robot",
                self.base_force_lim, self.base_torque_lim
            )
        })
    }
}

/// Episodic joint offsets and base wrench offset.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOffset {
    pub joint: Vec<f64>,
    pub base_force: Vec2,
    pub base_torque: f64,
}

impl EpisodeOffset {
    pub fn zero(joints: usize) -> Self {
        Self {
            joint: vec![0.0; joints],
            base_force: Vec2::zeros(),
            base_torque: 0.0,
        }
    }
}

fn uniform(rng: &mut Rng, limit: f64) -> f64 {
    if limit > 0.0 {
        rng.random_range(-limit..=limit)
    } else {
        0.0
    }
}

/// One torque per joint, each uniform on `[-tau_lim_r, tau_lim_r]`.
pub fn sample_step_injection(rng: &mut Rng, tau_lim_r: f64, joints: usize) -> Vec<f64> {
    (0..joints).map(|_| uniform(rng, tau_lim_r)).collect()
}

/// Episodic offsets, uniform per joint on `[-tau_lim_o, tau_lim_o]`, plus a
/// base wrench offset within the base limits.
pub fn sample_episode_offset(
    rng: &mut Rng,
    tau_lim_o: f64,
    joints: usize,
    base_force_lim: f64,
    base_torque_lim: f64,
) -> EpisodeOffset {
    let joint = sample_step_injection(rng, tau_lim_o, joints);
    let base_force = Vec2::new(uniform(rng, base_force_lim), uniform(rng, base_force_lim));
    let base_torque = uniform(rng, base_torque_lim);
    EpisodeOffset {
        joint,
        base_force,
        base_torque,
    }
}

/// Per-environment modes for `num_envs` parallel environments. ERFI-50 puts
/// RFI on even indices and RAO on odd ones.
pub fn assign_injection_modes(num_envs: usize, strategy: InjectionStrategy) -> Vec<InjectionMode> {
    (0..num_envs)
        .map(|i| match strategy {
            InjectionStrategy::None => InjectionMode::None,
            InjectionStrategy::Rfi => InjectionMode::Rfi,
            InjectionStrategy::Rao => InjectionMode::Rao,
            InjectionStrategy::ErfiC => InjectionMode::ErfiC,
            InjectionStrategy::Erfi50 if i % 2 == 0 => InjectionMode::Rfi,
            InjectionStrategy::Erfi50 => InjectionMode::Rao,
        })
        .collect()
}

/// Impedance torque plus injection, clamped to `torque_limits`. Zero
/// injection terms are skipped so the result is bit-identical to the plain
/// impedance law.
pub fn compute_torque(
    gains: &ImpedanceGains,
    q_desired: &[f64],
    q: &[f64],
    qd: &[f64],
    tau_r: &[f64],
    tau_o: &[f64],
    torque_limits: &[f64],
) -> Vec<f64> {
    (0..q.len())
        .map(|i| {
            let mut tau = gains.kp[i] * (q_desired[i] - q[i]) - gains.kd[i] * qd[i];
            if let Some(&r) = tau_r.get(i) {
                if r != 0.0 {
                    tau += r;
                }
            }
            if let Some(&o) = tau_o.get(i) {
                if o != 0.0 {
                    tau += o;
                }
            }
            tau.clamp(-torque_limits[i], torque_limits[i])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn impedance_arithmetic() {
        let gains = ImpedanceGains::uniform(80.0, 2.0, 1).unwrap();
        let tau = compute_torque(&gains, &[0.1], &[0.0], &[0.0], &[], &[], &[100.0]);
        assert!((tau[0] - 8.0).abs() < 1e-12);
    }

    #[test]
    fn injection_is_added_before_clamp() {
        let gains = ImpedanceGains::uniform(10.0, 0.0, 1).unwrap();
        let tau = compute_torque(&gains, &[1.0], &[0.0], &[0.0], &[3.0], &[2.0], &[12.0]);
        assert_eq!(tau[0], 12.0);
        let tau = compute_torque(&gains, &[0.5], &[0.0], &[0.0], &[3.0], &[-2.0], &[12.0]);
        assert!((tau[0] - 6.0).abs() < 1e-15);
    }

    #[test]
    fn zero_limit_samples_are_zero() {
        let mut rng = stream(1, 0);
        assert_eq!(sample_step_injection(&mut rng, 0.0, 4), vec![0.0; 4]);
        let off = sample_episode_offset(&mut rng, 0.0, 4, 0.0, 0.0);
        assert_eq!(off, EpisodeOffset::zero(4));
    }

    #[test]
    fn seeded_samples_repeat() {
        let a = sample_step_injection(&mut stream(9, 3), 20.0, 16);
        let b = sample_step_injection(&mut stream(9, 3), 20.0, 16);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| v.abs() <= 20.0));
    }

    #[test]
    fn erfi50_split() {
        let modes = assign_injection_modes(4096, InjectionStrategy::Erfi50);
        let rfi = modes.iter().filter(|m| **m == InjectionMode::Rfi).count();
        assert_eq!(rfi, 2048);
        assert_eq!(modes.len() - rfi, 2048);
        assert_eq!(
            assign_injection_modes(1, InjectionStrategy::Erfi50),
            vec![InjectionMode::Rfi]
        );
        assert_eq!(
            assign_injection_modes(3, InjectionStrategy::Rfi),
            vec![InjectionMode::Rfi; 3]
        );
        for n in 1..200 {
            let rfi = assign_injection_modes(n, InjectionStrategy::Erfi50)
                .into_iter()
                .filter(|m| *m == InjectionMode::Rfi)
                .count();
            assert_eq!(rfi, n.div_ceil(2));
        }
    }

    #[test]
    fn strategy_names_parse() {
        for s in InjectionStrategy::ALL {
            assert_eq!(s.name().parse::<InjectionStrategy>().unwrap(), s);
        }
        assert_eq!("ERFI_50".parse::<InjectionStrategy>().unwrap(), InjectionStrategy::Erfi50);
        assert!("erfi-99".parse::<InjectionStrategy>().is_err());
    }

    #[test]
    fn pronking_guard() {
        let mut cfg = InjectionConfig::default();
        assert!(cfg.pronking_warning(14.0).is_none());
        cfg.base_force_lim = 2.0;
        assert!(cfg.pronking_warning(14.0).is_some());
        assert!(cfg.pronking_warning(54.0).is_none());
    }

    #[test]
    fn invalid_gains_and_limits() {
        assert!(ImpedanceGains::uniform(0.0, 1.0, 2).is_err());
        assert!(ImpedanceGains::uniform(1.0, -1.0, 2).is_err());
        let cfg = InjectionConfig {
            tau_lim_r: -1.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
