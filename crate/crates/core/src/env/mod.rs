//! Velocity-tracking locomotion task on the planar quadruped.
//!
//! One [`LocomotionEnv`] is an independent value: it owns its randomized
//! model, terrain, injection state and random stream, so environments can be
//! stepped on any thread in any order.

mod observation;
mod reward;
mod terrain;

use std::io::Write;

use rand::Rng as _;
use serde::Serialize;
use thiserror::Error;

pub use observation::{
    build_observation, gravity_in_base, observation_scale, BaseReading, JointHistory,
    ObservationMode, HISTORY_LEN, SCAN_POINTS, SCAN_SPACING,
};
pub use reward::{compute_reward, RewardInputs, RewardTerms, RewardWeights, TRACKING_SIGMA};
pub use terrain::{
    generate_terrain, TerrainKind, TerrainParams, TerrainProfile, STEP_DEPTH_RANGE,
    STEP_HEIGHT_RANGE,
};

use crate::actuation::{
    compute_torque, sample_episode_offset, sample_step_injection, ActuationError, EpisodeOffset,
    ImpedanceGains, InjectionConfig, InjectionMode,
};
use crate::rbd::{
    forward_kinematics, step_dynamics, ExternalWrench, GeneralizedState, ModelError, RobotModel,
    Terrain, Vec2, STANDARD_GRAVITY,
};
use crate::rng::Rng;

#[derive(Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid environment configuration: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Actuation(#[from] ActuationError),
}

/// Forward velocity command. Lateral and yaw slots stay zero in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Command {
    /// m/s
    pub v_x: f64,
    pub v_y: f64,
    pub yaw_rate: f64,
}

pub const MAX_COMMAND: f64 = 1.0;

impl Command {
    pub fn forward(v_x: f64) -> Self {
        Self {
            v_x,
            ..Self::default()
        }
    }
}

/// Draws `v_x` uniformly from `range`; a degenerate range returns its bound.
pub fn sample_command(rng: &mut Rng, range: (f64, f64)) -> Command {
    let (lo, hi) = range;
    if lo < hi {
        Command::forward(rng.random_range(lo..=hi))
    } else {
        Command::forward(lo)
    }
}

/// Per-episode uniform scaling ranges for the dynamics-randomization
/// baseline. `[1, 1]` everywhere is the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainRandomization {
    /// Torso mass and rotational inertia.
    pub mass_scale: (f64, f64),
    /// Per-foot friction multiplier.
    pub friction_scale: (f64, f64),
    /// Drawn separately for K_p and K_d.
    pub gain_scale: (f64, f64),
}

impl Default for DomainRandomization {
    fn default() -> Self {
        Self::disabled()
    }
}

impl DomainRandomization {
    pub fn disabled() -> Self {
        Self {
            mass_scale: (1.0, 1.0),
            friction_scale: (1.0, 1.0),
            gain_scale: (1.0, 1.0),
        }
    }

    /// Ranges used by the explicit dynamics-randomization baseline.
    pub fn baseline() -> Self {
        Self {
            mass_scale: (0.8, 1.6),
            friction_scale: (0.5, 1.5),
            gain_scale: (0.8, 1.2),
        }
    }

    pub fn is_enabled(&self) -> bool {
        *self != Self::disabled()
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        for (name, (lo, hi)) in [
            ("mass_scale", self.mass_scale),
            ("friction_scale", self.friction_scale),
            ("gain_scale", self.gain_scale),
        ] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(EnvError::Invalid(format!("{name} range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

fn draw(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo < hi {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Randomized copies of `model` and `gains`. With every range at `[1, 1]`
/// the copies are bit-identical to the inputs and no randomness is consumed.
pub fn apply_domain_randomization(
    rng: &mut Rng,
    model: &RobotModel,
    gains: &ImpedanceGains,
    dr: &DomainRandomization,
) -> (RobotModel, ImpedanceGains) {
    let mut model = model.clone();
    let mut gains = gains.clone();
    if !dr.is_enabled() {
        return (model, gains);
    }
    let m = draw(rng, dr.mass_scale);
    model.torso.mass *= m;
    model.torso.inertia *= m;
    for foot in &mut model.feet {
        foot.friction_scale *= draw(rng, dr.friction_scale);
    }
    let kp = draw(rng, dr.gain_scale);
    let kd = draw(rng, dr.gain_scale);
    gains = gains.scaled(kp, kd);
    (model, gains)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Outcome {
    Running,
    Fall,
    Timeout,
}

/// Perturbations layered over an episode by the evaluation harness.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub wrench: ExternalWrench,
    /// Added to the measured joint angles before control and observation, rad.
    pub sensor_offset: Vec<f64>,
    /// m/s², negative downward.
    pub gravity: f64,
}

impl Perturbation {
    pub fn none(joints: usize) -> Self {
        Self {
            wrench: ExternalWrench::none(),
            sensor_offset: vec![0.0; joints],
            gravity: STANDARD_GRAVITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    /// s
    pub max_duration: f64,
    /// Impedance and dynamics rate, Hz.
    pub impedance_rate: f64,
    /// Impedance steps per policy step.
    pub decimation: usize,
    pub injection: InjectionConfig,
    pub randomization: DomainRandomization,
    pub terrain: TerrainParams,
    pub command_range: (f64, f64),
    pub observation: ObservationMode,
    /// rad per unit action.
    pub action_scale: f64,
    pub kp: f64,
    pub kd: f64,
    pub reward: RewardWeights,
    /// Uniform noise added to the nominal joint angles at reset, rad.
    pub reset_joint_noise: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            max_duration: 10.0,
            impedance_rate: 400.0,
            decimation: 8,
            injection: InjectionConfig::none(),
            randomization: DomainRandomization::disabled(),
            terrain: TerrainParams::default(),
            command_range: (-MAX_COMMAND, MAX_COMMAND),
            observation: ObservationMode::Blind,
            action_scale: 0.5,
            kp: 80.0,
            kd: 2.0,
            reward: RewardWeights::default(),
            reset_joint_noise: 0.0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.decimation == 0 {
            return Err(EnvError::Invalid("decimation must be at least 1".into()));
        }
        for (name, v) in [
            ("max_duration", self.max_duration),
            ("impedance_rate", self.impedance_rate),
            ("action_scale", self.action_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(EnvError::Invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        let (lo, hi) = self.command_range;
        if !(lo <= hi && lo >= -MAX_COMMAND && hi <= MAX_COMMAND) {
            return Err(EnvError::Invalid(format!(
                "command range [{lo}, {hi}] outside ±{MAX_COMMAND}"
            )));
        }
        if !(self.reset_joint_noise >= 0.0) {
            return Err(EnvError::Invalid("reset_joint_noise must be >= 0".into()));
        }
        self.injection.validate()?;
        self.randomization.validate()?;
        self.terrain.validate()?;
        ImpedanceGains::uniform(self.kp, self.kd, 1)?;
        Ok(())
    }

    /// s
    pub fn impedance_dt(&self) -> f64 {
        1.0 / self.impedance_rate
    }

    /// s
    pub fn policy_dt(&self) -> f64 {
        self.decimation as f64 / self.impedance_rate
    }
}

/// Termination check. `nominal_height` is the torso height of the standing
/// pose above the terrain under the base.
pub fn check_termination(
    model: &RobotModel,
    state: &GeneralizedState,
    terrain: &(impl Terrain + ?Sized),
    nominal_height: f64,
    max_duration: f64,
) -> Outcome {
    let (x, z, pitch) = model.base_pose(&state.q);
    if !state.is_finite() || pitch.abs() > 1.0 || z - terrain.height(x) < 0.3 * nominal_height {
        return Outcome::Fall;
    }
    let kin = forward_kinematics(model, &state.q);
    if kin
        .torso_points(model)
        .iter()
        .any(|p| p.y <= terrain.height(p.x))
    {
        return Outcome::Fall;
    }
    if state.time >= max_duration - 1e-9 {
        Outcome::Timeout
    } else {
        Outcome::Running
    }
}

/// One dumped impedance-rate sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub q: Vec<f64>,
    pub u: Vec<f64>,
    pub tau: Vec<f64>,
    pub reward: RewardTerms,
}

/// Writes rows as CSV: `t, q0.., u0.., tau0.., reward terms`.
pub fn write_trajectory_csv<W: Write>(rows: &[TrajectoryRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let (nq, nt) = rows
        .first()
        .map(|r| (r.q.len(), r.tau.len()))
        .unwrap_or((0, 0));
    let mut header = vec!["t".to_string()];
    header.extend((0..nq).map(|i| format!("q{i}")));
    header.extend((0..nq).map(|i| format!("u{i}")));
    header.extend((0..nt).map(|i| format!("tau{i}")));
    header.extend(
        [
            "r_velocity",
            "r_angular_rate",
            "r_torque",
            "r_action_rate",
            "r_orientation",
            "r_joint_accel",
            "r_total",
        ]
        .map(String::from),
    );
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.t];
        rec.extend(&r.q);
        rec.extend(&r.u);
        rec.extend(&r.tau);
        let g = &r.reward;
        rec.extend([
            g.velocity,
            g.angular_rate,
            g.torque,
            g.action_rate,
            g.orientation,
            g.joint_accel,
            g.total,
        ]);
        w.write_record(rec.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Result of one policy-rate step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub reward: RewardTerms,
    pub outcome: Outcome,
    /// Set when the episode ended because of invalid input or divergence.
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone)]
pub struct LocomotionEnv {
    pub config: EpisodeConfig,
    /// Unrandomized model; never modified.
    pub nominal: RobotModel,
    pub mode: InjectionMode,
    pub model: RobotModel,
    pub gains: ImpedanceGains,
    pub terrain: TerrainProfile,
    pub state: GeneralizedState,
    pub offset: EpisodeOffset,
    pub command: Command,
    pub perturbation: Perturbation,
    pub previous_action: Vec<f64>,
    pub history: JointHistory,
    /// Base x at reset, m.
    pub start_x: f64,
    pub nominal_height: f64,
    pub rng: Rng,
    /// Impedance-rate rows, collected when enabled.
    pub trajectory: Option<Vec<TrajectoryRow>>,
    torque_limits: Vec<f64>,
}

impl LocomotionEnv {
    /// Builds an environment and resets it once.
    pub fn new(
        config: EpisodeConfig,
        nominal: RobotModel,
        mode: InjectionMode,
        rng: Rng,
    ) -> Result<Self, EnvError> {
        config.validate()?;
        if !nominal.is_floating() {
            return Err(EnvError::Invalid("locomotion needs a floating base".into()));
        }
        let joints = nominal.num_joints();
        let gains = ImpedanceGains::uniform(config.kp, config.kd, joints)?;
        let mut env = Self {
            mode,
            model: nominal.clone(),
            gains,
            terrain: TerrainProfile::flat(config.terrain.friction),
            state: GeneralizedState::at_rest(vec![0.0; nominal.ndof()]),
            offset: EpisodeOffset::zero(joints),
            command: Command::default(),
            perturbation: Perturbation::none(joints),
            previous_action: vec![0.0; joints],
            history: JointHistory::new(joints),
            start_x: 0.0,
            nominal_height: 0.0,
            rng,
            trajectory: None,
            torque_limits: nominal.torque_limits(),
            nominal,
            config,
        };
        env.reset()?;
        Ok(env)
    }

    pub fn num_joints(&self) -> usize {
        self.nominal.num_joints()
    }

    pub fn observation_len(&self) -> usize {
        self.config.observation.len(self.num_joints())
    }

    /// Starts a new training episode: fresh terrain, randomization, offset
    /// and command, all drawn from this environment's stream.
    pub fn reset(&mut self) -> Result<Vec<f64>, EnvError> {
        let terrain = generate_terrain(&mut self.rng, &self.config.terrain)?;
        let gains = ImpedanceGains::uniform(self.config.kp, self.config.kd, self.num_joints())?;
        let (model, gains) = apply_domain_randomization(
            &mut self.rng,
            &self.nominal,
            &gains,
            &self.config.randomization,
        );
        let command = sample_command(&mut self.rng, self.config.command_range);
        Ok(self.reset_with(model, gains, terrain, command, Perturbation::none(self.num_joints())))
    }

    /// Starts an episode with explicitly supplied conditions. The episodic
    /// offset and reset noise still come from the environment's stream.
    pub fn reset_with(
        &mut self,
        model: RobotModel,
        gains: ImpedanceGains,
        terrain: TerrainProfile,
        command: Command,
        perturbation: Perturbation,
    ) -> Vec<f64> {
        let joints = self.num_joints();
        let inj = &self.config.injection;
        self.offset = if self.mode.episodic() {
            sample_episode_offset(
                &mut self.rng,
                inj.tau_lim_o,
                joints,
                inj.base_force_lim,
                inj.base_torque_lim,
            )
        } else {
            EpisodeOffset::zero(joints)
        };
        let mut joints_q = model.nominal_joint_positions();
        if self.config.reset_joint_noise > 0.0 {
            let s = self.config.reset_joint_noise;
            for (q, joint) in joints_q.iter_mut().zip(&model.joints) {
                *q = (*q + self.rng.random_range(-s..=s)).clamp(joint.lower, joint.upper);
            }
        }
        let mut q = vec![0.0, 0.0, 0.0];
        q.extend(&joints_q);
        let kin = forward_kinematics(&model, &q);
        // Lift the base until the lowest foot rests on the terrain.
        let lift = kin
            .feet
            .iter()
            .map(|f| terrain.height(f.x) - f.y)
            .fold(f64::NEG_INFINITY, f64::max);
        q[1] = lift;
        let mut nominal_q = vec![0.0, 0.0, 0.0];
        nominal_q.extend(model.nominal_joint_positions());
        let nkin = forward_kinematics(&model, &nominal_q);
        self.nominal_height = -nkin.feet.iter().map(|f| f.y).fold(f64::INFINITY, f64::min);
        self.torque_limits = model.torque_limits();
        self.model = model;
        self.gains = gains;
        self.terrain = terrain;
        self.command = command;
        self.perturbation = perturbation;
        self.state = GeneralizedState::at_rest(q);
        self.start_x = 0.0;
        self.previous_action = vec![0.0; joints];
        self.history = JointHistory::new(joints);
        if let Some(t) = &mut self.trajectory {
            t.clear();
        }
        self.observation()
    }

    fn sensed_joints(&self) -> Vec<f64> {
        let nb = self.model.base_dofs();
        self.state.q[nb..]
            .iter()
            .zip(&self.perturbation.sensor_offset)
            .map(|(q, o)| q + o)
            .collect()
    }

    fn joint_velocities(&self) -> &[f64] {
        &self.state.u[self.model.base_dofs()..]
    }

    fn base_reading(&self) -> BaseReading {
        BaseReading {
            x: self.state.q[0],
            z: self.state.q[1],
            pitch: self.state.q[2],
            velocity: Vec2::new(self.state.u[0], self.state.u[1]),
            pitch_rate: self.state.u[2],
        }
    }

    pub fn observation(&self) -> Vec<f64> {
        build_observation(
            &self.base_reading(),
            &self.previous_action,
            self.command.v_x,
            &self.history,
            &self.terrain,
            self.config.observation,
        )
    }

    /// Forward displacement since reset, m.
    pub fn distance(&self) -> f64 {
        self.state.q[0] - self.start_x
    }

    fn injection_wrench(&mut self, t: f64) -> ExternalWrench {
        let inj = self.config.injection;
        let mut w = self.perturbation.wrench;
        if !w.is_active(t) {
            w = ExternalWrench::none();
        }
        let (mut force, mut torque) = (w.force, w.torque);
        if inj.base_injection_enabled() {
            if self.mode.per_step() {
                force += Vec2::new(
                    sample_step_injection(&mut self.rng, inj.base_force_lim, 1)[0],
                    sample_step_injection(&mut self.rng, inj.base_force_lim, 1)[0],
                );
                torque += sample_step_injection(&mut self.rng, inj.base_torque_lim, 1)[0];
            }
            force += self.offset.base_force;
            torque += self.offset.base_torque;
        }
        if force == Vec2::zeros() && torque == 0.0 {
            ExternalWrench::none()
        } else {
            ExternalWrench::constant(force, torque)
        }
    }

    /// Applies `action` for one policy period.
    pub fn step(&mut self, action: &[f64]) -> Transition {
        let joints = self.num_joints();
        let policy_dt = self.config.policy_dt();
        if action.len() != joints || action.iter().any(|a| !a.is_finite()) {
            return Transition {
                observation: self.observation(),
                reward: RewardTerms::default(),
                outcome: Outcome::Fall,
                diagnostic: Some(format!("invalid action {action:?}")),
            };
        }
        let nominal = self.model.nominal_joint_positions();
        let q_des: Vec<f64> = nominal
            .iter()
            .zip(action)
            .map(|(n, a)| n + self.config.action_scale * a)
            .collect();
        let previous_velocity = self.joint_velocities().to_vec();
        let step_limit = self.config.injection.step_limit(self.mode);
        let dt = self.config.impedance_dt();
        let mut tau_sum = vec![0.0; joints];
        let mut diagnostic = None;
        for _ in 0..self.config.decimation {
            let tau_r = if step_limit > 0.0 {
                sample_step_injection(&mut self.rng, step_limit, joints)
            } else {
                Vec::new()
            };
            let q = self.sensed_joints();
            let tau = compute_torque(
                &self.gains,
                &q_des,
                &q,
                self.joint_velocities(),
                &tau_r,
                &self.offset.joint,
                &self.torque_limits,
            );
            let wrench = self.injection_wrench(self.state.time);
            match step_dynamics(
                &self.model,
                &self.state,
                &tau,
                &wrench,
                &self.terrain,
                self.perturbation.gravity,
                dt,
            ) {
                Ok(out) => self.state = out.state,
                Err(e) => {
                    diagnostic = Some(format!("simulation diverged: {e}"));
                    break;
                }
            }
            for (s, t) in tau_sum.iter_mut().zip(&tau) {
                *s += t;
            }
            if let Some(rows) = &mut self.trajectory {
                rows.push(TrajectoryRow {
                    t: self.state.time,
                    q: self.state.q.clone(),
                    u: self.state.u.clone(),
                    tau,
                    reward: RewardTerms::default(),
                });
            }
        }
        let mean_tau: Vec<f64> = tau_sum
            .iter()
            .map(|t| t / self.config.decimation as f64)
            .collect();
        let pitch = self.state.q[2];
        let reward = compute_reward(
            &RewardInputs {
                forward_velocity: self.state.u[0],
                pitch_rate: self.state.u[2],
                gravity_x: gravity_in_base(pitch).x,
                torque: &mean_tau,
                action,
                previous_action: &self.previous_action,
                joint_velocity: self.joint_velocities(),
                previous_joint_velocity: &previous_velocity,
                dt: policy_dt,
                command: self.command.v_x,
            },
            &self.config.reward,
        );
        if let Some(last) = self.trajectory.as_mut().and_then(|r| r.last_mut()) {
            last.reward = reward;
        }
        let sensed = self.sensed_joints();
        let error: Vec<f64> = q_des.iter().zip(&sensed).map(|(d, q)| d - q).collect();
        let velocity = self.joint_velocities().to_vec();
        self.history.push(error, velocity);
        self.previous_action = action.to_vec();
        let outcome = if diagnostic.is_some() {
            Outcome::Fall
        } else {
            check_termination(
                &self.model,
                &self.state,
                &self.terrain,
                self.nominal_height,
                self.config.max_duration,
            )
        };
        Transition {
            observation: self.observation(),
            reward,
            outcome,
            diagnostic,
        }
    }
}

/// Writes the collected trajectory of `env`, if recording was enabled.
pub fn dump_trajectory<W: Write>(env: &LocomotionEnv, out: W) -> csv::Result<()> {
    write_trajectory_csv(env.trajectory.as_deref().unwrap_or(&[]), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rbd::{build_model, ModelParams};
    use crate::rng::stream;

    fn env(mode: InjectionMode, config: EpisodeConfig) -> LocomotionEnv {
        let model = build_model(&ModelParams::default()).unwrap();
        LocomotionEnv::new(config, model, mode, stream(3, 0)).unwrap()
    }

    #[test]
    fn reset_is_nominal_pose() {
        let e = env(InjectionMode::None, EpisodeConfig::default());
        let params = ModelParams::default();
        assert_eq!(e.model, e.nominal);
        assert_eq!(&e.state.q[3..], e.nominal.nominal_joint_positions().as_slice());
        assert!((e.state.q[1] - params.nominal_standing_height()).abs() < 1e-12);
        assert_eq!(e.state.u, vec![0.0; 7]);
        assert_eq!(e.offset, EpisodeOffset::zero(4));
    }

    #[test]
    fn zero_action_stands() {
        let mut e = env(InjectionMode::None, EpisodeConfig::default());
        let h = e.nominal_height;
        for _ in 0..150 {
            let t = e.step(&[0.0; 4]);
            assert_eq!(t.outcome, Outcome::Running);
            assert!((e.state.q[1] - h).abs() < 0.2 * h);
        }
        assert!(e.state.time >= 2.0);
    }

    #[test]
    fn policy_period() {
        let c = EpisodeConfig::default();
        assert_eq!(c.policy_dt(), 0.02);
    }

    #[test]
    fn rao_offset_bounded_and_constant() {
        let config = EpisodeConfig {
            injection: InjectionConfig::with_strategy(crate::actuation::InjectionStrategy::Rao),
            ..Default::default()
        };
        let mut e = env(InjectionMode::Rao, config);
        let offset = e.offset.clone();
        assert!(offset.joint.iter().all(|o| o.abs() <= 4.0));
        assert!(offset.joint.iter().any(|o| *o != 0.0));
        for _ in 0..10 {
            e.step(&[0.0; 4]);
            assert_eq!(e.offset, offset);
        }
        e.reset().unwrap();
        assert_ne!(e.offset, offset);
    }

    #[test]
    fn non_finite_action_falls() {
        let mut e = env(InjectionMode::None, EpisodeConfig::default());
        let t = e.step(&[f64::NAN, 0.0, 0.0, 0.0]);
        assert_eq!(t.outcome, Outcome::Fall);
        assert!(t.diagnostic.is_some());
    }

    #[test]
    fn termination_thresholds() {
        let e = env(InjectionMode::None, EpisodeConfig::default());
        let h = e.nominal_height;
        let check = |s: &GeneralizedState| check_termination(&e.model, s, &e.terrain, h, 10.0);
        assert_eq!(check(&e.state), Outcome::Running);
        let mut s = e.state.clone();
        s.q[2] = 1.5;
        assert_eq!(check(&s), Outcome::Fall);
        let mut s = e.state.clone();
        s.time = 10.0;
        assert_eq!(check(&s), Outcome::Timeout);
        let mut s = e.state.clone();
        s.q[1] = 0.2 * h;
        assert_eq!(check(&s), Outcome::Fall);
    }

    #[test]
    fn randomization_identity_and_bounds() {
        let model = build_model(&ModelParams::default()).unwrap();
        let gains = ImpedanceGains::uniform(80.0, 2.0, 4).unwrap();
        let mut rng = stream(1, 1);
        let (m, g) =
            apply_domain_randomization(&mut rng, &model, &gains, &DomainRandomization::disabled());
        assert_eq!((m, g), (model.clone(), gains.clone()));
        let dr = DomainRandomization {
            mass_scale: (0.8, 1.2),
            ..DomainRandomization::disabled()
        };
        for _ in 0..100 {
            let (m, _) = apply_domain_randomization(&mut rng, &model, &gains, &dr);
            assert!(m.torso.mass >= 8.0 && m.torso.mass <= 12.0);
        }
    }

    #[test]
    fn trajectory_dump_has_header_and_rows() {
        let mut e = env(InjectionMode::None, EpisodeConfig::default());
        e.trajectory = Some(Vec::new());
        e.step(&[0.0; 4]);
        let mut buf = Vec::new();
        dump_trajectory(&e, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 8);
        assert!(text.starts_with("t,q0,"));
    }
}
