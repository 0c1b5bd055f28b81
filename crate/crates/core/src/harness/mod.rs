//! Robustness evaluation: fixed-command trials under one perturbation at a
//! time, paired across policies, aggregated into success-rate curves.
//!
//! Ranges quoted for a 54 kg quadruped are re-expressed through
//! [`mass_ratio`] so a lighter model sees the same relative loads.

mod report;
mod svg;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use report::{
    average_curves, curves_from_trials, read_curves_csv, read_trials_csv, summarize_comparison,
    summarize_comparison_where, write_curves_csv, write_trials_csv, Comparison, ComparisonRow,
    CurvePoint, SuccessCurve, Z_95,
};
pub use svg::{line_plot_svg, success_curves_svg, Series};

use crate::actuation::InjectionMode;
use crate::env::{
    generate_terrain, Command, EnvError, EpisodeConfig, LocomotionEnv, Outcome, Perturbation,
    TerrainParams, TerrainProfile,
};
use crate::par;
use crate::policy::{Controller, PolicyError, PolicyParams};
use crate::rbd::{ExternalWrench, RobotModel, Vec2, STANDARD_GRAVITY};
use crate::rng;

/// Mass of the reference quadruped whose loads the sweep ranges quote, kg.
pub const REFERENCE_MASS: f64 = 54.0;
/// Nominal total mass the default planar model is built around, kg.
pub const PLANAR_REFERENCE_MASS: f64 = 14.0;
/// Base mass range of the reference robot, as a ratio of its 27 kg base.
pub const MASS_SCALE_RANGE: (f64, f64) = (22.0 / 27.0, 65.0 / 27.0);
pub const FORCE_ONSET: f64 = 2.0;
pub const FORCE_DURATION: f64 = 3.0;
pub const TORQUE_DURATION: f64 = 1.0;
/// Force held while its duration is swept, N on the reference robot.
pub const DURATION_SWEEP_FORCE: f64 = 50.0;
/// Arm payload on the planar model, kg, before mass scaling.
pub const ARM_MASS: f64 = 1.2;
pub const ARM_OFFSET: (f64, f64) = (0.05, 0.12);

const STREAM_TRIAL: u64 = 7;
const RANGE_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid sweep: {0}")]
    Invalid(String),
    #[error("unknown parameter tag `{0}`")]
    UnknownTag(String),
    #[error("{param} value {value} outside [{lo}, {hi}]")]
    OutOfRange {
        param: SweepParam,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("curves do not share a parameter and grid: {0}")]
    MismatchedGrids(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Scale from reference-robot loads to `model`.
pub fn mass_ratio(model: &RobotModel) -> f64 {
    model.total_mass() / REFERENCE_MASS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SweepParam {
    BaseMassScale,
    ExtForceN,
    ExtForceDurationS,
    ExtTorqueNm,
    FrictionMu,
    GravityMs2,
    KneeOffsetRad,
    Payload,
}

impl SweepParam {
    pub const ALL: [SweepParam; 8] = [
        Self::BaseMassScale,
        Self::ExtForceN,
        Self::ExtForceDurationS,
        Self::ExtTorqueNm,
        Self::FrictionMu,
        Self::GravityMs2,
        Self::KneeOffsetRad,
        Self::Payload,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Self::BaseMassScale => "BASE_MASS_SCALE",
            Self::ExtForceN => "EXT_FORCE_N",
            Self::ExtForceDurationS => "EXT_FORCE_DURATION_S",
            Self::ExtTorqueNm => "EXT_TORQUE_NM",
            Self::FrictionMu => "FRICTION_MU",
            Self::GravityMs2 => "GRAVITY_MS2",
            Self::KneeOffsetRad => "KNEE_OFFSET_RAD",
            Self::Payload => "PAYLOAD",
        }
    }

    pub fn axis_label(self) -> &'static str {
        match self {
            Self::BaseMassScale => "base mass scale",
            Self::ExtForceN => "external force [N]",
            Self::ExtForceDurationS => "force duration [s]",
            Self::ExtTorqueNm => "external torque [N m]",
            Self::FrictionMu => "friction coefficient",
            Self::GravityMs2 => "gravity [m/s^2]",
            Self::KneeOffsetRad => "knee offset [rad]",
            Self::Payload => "payload mass [kg]",
        }
    }

    /// Admissible values on `model`.
    pub fn range(self, model: &RobotModel) -> (f64, f64) {
        let r = mass_ratio(model);
        match self {
            Self::BaseMassScale => MASS_SCALE_RANGE,
            Self::ExtForceN => (0.0, 150.0 * r),
            Self::ExtForceDurationS => (0.0, 3.0),
            Self::ExtTorqueNm => (0.0, 75.0 * r),
            Self::FrictionMu => (0.2, 0.8),
            Self::GravityMs2 => (-18.0, -2.0),
            Self::KneeOffsetRad => (-0.15, 0.15),
            Self::Payload => (0.0, 4.0 * ARM_MASS * model.total_mass() / PLANAR_REFERENCE_MASS),
        }
    }

    /// Evenly spaced grid over [`Self::range`], with the training value
    /// included where it lies inside. Mass scales use round steps between
    /// the range ends.
    pub fn default_grid(self, model: &RobotModel) -> Vec<f64> {
        if self == Self::BaseMassScale {
            let (lo, hi) = MASS_SCALE_RANGE;
            return vec![lo, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.2, hi];
        }
        let (lo, hi) = self.range(model);
        let n = match self {
            Self::GravityMs2 => 9,
            _ => 7,
        };
        let mut grid: Vec<f64> = (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect();
        let nominal = match self {
            Self::FrictionMu => Some(0.5),
            Self::GravityMs2 => Some(STANDARD_GRAVITY),
            _ => None,
        };
        if let Some(v) = nominal {
            if !grid.iter().any(|g| (g - v).abs() < 1e-9) {
                grid.push(v);
                grid.sort_by(f64::total_cmp);
            }
        }
        grid
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SweepParam {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_uppercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|p| p.tag() == t)
            .ok_or_else(|| HarnessError::UnknownTag(s.to_string()))
    }
}

/// Rigid point mass fixed to the torso.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayloadSpec {
    /// kg
    pub mass: f64,
    /// Mounting point in the torso frame, m.
    pub offset: Vec2,
}

impl PayloadSpec {
    /// Arm proxy sized to `model`.
    pub fn arm(model: &RobotModel) -> Self {
        Self {
            mass: ARM_MASS * model.total_mass() / PLANAR_REFERENCE_MASS,
            offset: Vec2::new(ARM_OFFSET.0, ARM_OFFSET.1),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.mass >= 0.0 && self.mass.is_finite())
            || !self.offset.iter().all(|v| v.is_finite())
        {
            return Err(HarnessError::Invalid(format!("payload {self:?}")));
        }
        Ok(())
    }
}

/// Composite torso: mass, center of mass and inertia about the new center
/// combined by the parallel-axis theorem. A zero mass returns an exact copy.
pub fn attach_payload(model: &RobotModel, payload: &PayloadSpec) -> Result<RobotModel, HarnessError> {
    payload.validate()?;
    let mut out = model.clone();
    if payload.mass == 0.0 {
        return Ok(out);
    }
    let t = &model.torso;
    let m = t.mass + payload.mass;
    let com = (t.com * t.mass + payload.offset * payload.mass) / m;
    out.torso.inertia = t.inertia
        + t.mass * (t.com - com).norm_squared()
        + payload.mass * (payload.offset - com).norm_squared();
    out.torso.mass = m;
    out.torso.com = com;
    Ok(out)
}

/// One perturbed evaluation condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub model: RobotModel,
    pub perturbation: Perturbation,
    /// Replaces the terrain's friction coefficient.
    pub friction: Option<f64>,
}

/// Builds the condition for `value` of `param` on `model`.
pub fn apply_perturbation(
    param: SweepParam,
    value: f64,
    model: &RobotModel,
) -> Result<Scenario, HarnessError> {
    let (lo, hi) = param.range(model);
    if !(value >= lo - RANGE_SLACK && value <= hi + RANGE_SLACK) {
        return Err(HarnessError::OutOfRange {
            param,
            value,
            lo,
            hi,
        });
    }
    let mut s = Scenario {
        model: model.clone(),
        perturbation: Perturbation::none(model.num_joints()),
        friction: None,
    };
    match param {
        SweepParam::BaseMassScale => {
            // Uniform density: inertia follows mass.
            s.model.torso.mass *= value;
            s.model.torso.inertia *= value;
        }
        SweepParam::ExtForceN => {
            s.perturbation.wrench = ExternalWrench {
                force: Vec2::new(value, 0.0),
                torque: 0.0,
                start: FORCE_ONSET,
                duration: FORCE_DURATION,
            };
        }
        SweepParam::ExtForceDurationS => {
            s.perturbation.wrench = ExternalWrench {
                force: Vec2::new(DURATION_SWEEP_FORCE * mass_ratio(model), 0.0),
                torque: 0.0,
                start: FORCE_ONSET,
                duration: value,
            };
        }
        SweepParam::ExtTorqueNm => {
            s.perturbation.wrench = ExternalWrench {
                force: Vec2::zeros(),
                torque: value,
                start: FORCE_ONSET,
                duration: TORQUE_DURATION,
            };
        }
        SweepParam::FrictionMu => s.friction = Some(value),
        SweepParam::GravityMs2 => s.perturbation.gravity = value,
        SweepParam::KneeOffsetRad => {
            for (o, j) in s.perturbation.sensor_offset.iter_mut().zip(&model.joints) {
                if j.name.contains("knee") {
                    *o = value;
                }
            }
        }
        SweepParam::Payload => {
            let arm = PayloadSpec::arm(model);
            s.model = attach_payload(
                model,
                &PayloadSpec {
                    mass: value,
                    offset: arm.offset,
                },
            )?;
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrialOutcome {
    Success,
    Fall,
    /// Alive at the budget without covering the distance.
    Stall,
    /// Ended before the budget without falling or succeeding.
    Timeout,
}

impl TrialOutcome {
    pub fn name(self) -> &'static str {
        match self {
            Self::Success => "SUCCESS",
            Self::Fall => "FALL",
            Self::Stall => "STALL",
            Self::Timeout => "TIMEOUT",
        }
    }
}

/// The success criterion. `elapsed` is when the rollout ended.
pub fn classify(distance: f64, fell: bool, elapsed: f64, budget: f64, threshold: f64) -> TrialOutcome {
    if fell {
        TrialOutcome::Fall
    } else if distance >= threshold && elapsed <= budget {
        TrialOutcome::Success
    } else if elapsed >= budget {
        TrialOutcome::Stall
    } else {
        TrialOutcome::Timeout
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub policy_id: String,
    pub param_tag: SweepParam,
    pub param_value: f64,
    pub seed: u64,
    pub outcome: TrialOutcome,
    pub distance_m: f64,
    pub mean_speed_mps: f64,
    pub survival_s: f64,
    /// The rollout ended in a simulation failure; recorded as a fall.
    #[serde(skip)]
    pub diverged: bool,
}

/// Conditions shared by every trial of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    /// m/s
    pub command: f64,
    /// s
    pub budget: f64,
    /// m
    pub threshold: f64,
    /// Uniform joint-angle noise at spawn, rad; the only source of
    /// trial-to-trial variation on flat ground.
    pub reset_noise: f64,
    /// Template for the evaluation environment; injection and
    /// randomization are ignored.
    pub episode: EpisodeConfig,
}

impl Default for TrialSpec {
    fn default() -> Self {
        Self {
            command: 0.5,
            budget: 8.0,
            threshold: 2.5,
            reset_noise: 0.05,
            episode: EpisodeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub grid: Vec<f64>,
    pub trials: usize,
    pub terrain: TerrainParams,
    pub trial: TrialSpec,
    /// Mounted before the swept perturbation is applied.
    pub payload: Option<PayloadSpec>,
    pub seed: u64,
}

impl SweepSpec {
    pub fn new(param: SweepParam, grid: Vec<f64>) -> Self {
        Self {
            param,
            grid,
            trials: 50,
            terrain: TerrainParams::default(),
            trial: TrialSpec::default(),
            payload: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.grid.is_empty() {
            return Err(HarnessError::Invalid("empty grid".into()));
        }
        if self.grid.iter().any(|v| !v.is_finite()) || self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::Invalid(format!(
                "grid must be finite and strictly increasing: {:?}",
                self.grid
            )));
        }
        if self.trials == 0 {
            return Err(HarnessError::Invalid("trials must be at least 1".into()));
        }
        let t = &self.trial;
        if !(t.budget > 0.0 && t.threshold.is_finite() && t.command.is_finite() && t.reset_noise >= 0.0) {
            return Err(HarnessError::Invalid(format!(
                "budget {}, threshold {}, command {}, reset noise {}",
                t.budget, t.threshold, t.command, t.reset_noise
            )));
        }
        self.terrain.validate()?;
        if let Some(p) = &self.payload {
            p.validate()?;
        }
        Ok(())
    }
}

/// Terrain of trial `seed` at `value`. Independent of the policy, so every
/// policy meets the same ground.
pub fn trial_terrain(spec: &SweepSpec, value: f64, seed: u64) -> Result<TerrainProfile, HarnessError> {
    let mut rng = rng::stream(spec.seed, rng::key(&[STREAM_TRIAL, value.to_bits(), seed]));
    Ok(generate_terrain(&mut rng, &spec.terrain)?)
}

/// Rolls out the deterministic policy once. The run stops when the
/// threshold is crossed, on a fall, or at the budget.
#[allow(clippy::too_many_arguments)]
pub fn run_trial(
    controller: &Controller,
    policy_id: &str,
    scenario: &Scenario,
    terrain: TerrainProfile,
    spec: &TrialSpec,
    param: SweepParam,
    value: f64,
    seed: u64,
    stream: rng::Rng,
) -> Result<TrialResult, HarnessError> {
    let mut terrain = terrain;
    if let Some(mu) = scenario.friction {
        terrain.friction = mu;
    }
    let episode = EpisodeConfig {
        max_duration: spec.budget,
        injection: crate::actuation::InjectionConfig::none(),
        randomization: crate::env::DomainRandomization::disabled(),
        reset_joint_noise: spec.reset_noise,
        ..spec.episode.clone()
    };
    let mut env = LocomotionEnv::new(episode, scenario.model.clone(), InjectionMode::None, stream)?;
    let gains = env.gains.clone();
    let mut obs = env.reset_with(
        scenario.model.clone(),
        gains,
        terrain,
        Command::forward(spec.command),
        scenario.perturbation.clone(),
    );
    let mut fell = false;
    let mut diverged = false;
    loop {
        let action = controller.act(&obs)?;
        let tr = env.step(&action);
        obs = tr.observation;
        match tr.outcome {
            Outcome::Fall => {
                fell = true;
                if let Some(d) = tr.diagnostic {
                    log::warn!("{policy_id} {param}={value} seed {seed}: {d}");
                    diverged = true;
                }
                break;
            }
            Outcome::Timeout => break,
            Outcome::Running if env.distance() >= spec.threshold => break,
            Outcome::Running => {}
        }
    }
    let distance = if env.distance().is_finite() { env.distance() } else { 0.0 };
    let elapsed = env.state.time;
    let elapsed = if elapsed.is_finite() { elapsed } else { 0.0 };
    Ok(TrialResult {
        policy_id: policy_id.to_string(),
        param_tag: param,
        param_value: value,
        seed,
        outcome: classify(distance, fell, elapsed + 1e-9, spec.budget, spec.threshold),
        distance_m: distance,
        mean_speed_mps: if elapsed > 0.0 { distance / elapsed } else { 0.0 },
        survival_s: elapsed,
        diverged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedPolicy {
    pub id: String,
    pub params: PolicyParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    /// Policy-major, then grid value, then seed.
    pub trials: Vec<TrialResult>,
    pub curves: Vec<SuccessCurve>,
}

/// Every policy against every grid value and trial seed. Trials are
/// independent and run in parallel; the output does not depend on the
/// thread count.
pub fn run_sweep(
    policies: &[NamedPolicy],
    model: &RobotModel,
    spec: &SweepSpec,
) -> Result<SweepOutput, HarnessError> {
    if policies.is_empty() {
        return Err(HarnessError::Invalid("no policies".into()));
    }
    spec.validate()?;
    if spec.payload.is_some() && spec.param == SweepParam::Payload {
        return Err(HarnessError::Invalid(
            "a PAYLOAD sweep cannot carry a second payload".into(),
        ));
    }
    let controllers = policies
        .iter()
        .map(|p| {
            let mode = Controller::mode_for(&p.params).ok_or_else(|| {
                HarnessError::Invalid(format!("policy `{}` has an unrecognized input size", p.id))
            })?;
            Ok(Controller::new(p.params.clone(), mode)?)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let scenarios = spec
        .grid
        .iter()
        .map(|&v| {
            let mut s = apply_perturbation(spec.param, v, model)?;
            if let Some(p) = &spec.payload {
                s.model = attach_payload(&s.model, p)?;
            }
            Ok(s)
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let jobs: Vec<(usize, usize, u64)> = (0..policies.len())
        .flat_map(|p| {
            (0..spec.grid.len()).flat_map(move |v| (0..spec.trials as u64).map(move |s| (p, v, s)))
        })
        .collect();
    let results = par::map(&jobs, |_, &(p, v, seed)| {
        let value = spec.grid[v];
        let terrain = trial_terrain(spec, value, seed)?;
        // Spawn noise is keyed like the terrain: paired across policies.
        let stream = rng::stream(
            spec.seed,
            rng::key(&[STREAM_TRIAL + 1, value.to_bits(), seed]),
        );
        run_trial(
            &controllers[p],
            &policies[p].id,
            &scenarios[v],
            terrain,
            &spec.trial,
            spec.param,
            value,
            seed,
            stream,
        )
    });
    let trials = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let curves = curves_from_trials(&trials);
    Ok(SweepOutput { trials, curves })
}
