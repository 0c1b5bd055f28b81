//! Gaussian MLP policies trained with clipped-surrogate policy optimization.

mod adam;
pub mod checkpoint;
mod gae;
pub mod gaussian;
mod mlp;
mod ppo;
mod train;

use ndarray::Array2;
use thiserror::Error;

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gae::{compute_gae, normalize};
pub use mlp::{Activation, ForwardCache, Gradients, PolicyParams};
pub use ppo::{ppo_update, Learner, PpoConfig, RolloutBuffer, UpdateStats};
pub use train::{
    evaluate_forward_speed, read_training_curve, train, write_training_curve, TrainConfig,
    TrainOutput, TrainingRecord,
};

use crate::env::{observation_scale, ObservationMode};

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cache does not belong to the current parameters")]
    StaleCache,
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("advantages not computed")]
    MissingAdvantages,
    #[error("invalid trainer configuration: {0}")]
    Config(String),
    #[error("simulation diverged in {envs} environments at iteration {iteration}")]
    Diverged { iteration: usize, envs: usize },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("truncated checkpoint: needed {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("malformed checkpoint: {0}")]
    Format(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

impl PolicyError {
    /// Stable numeric code per failure kind.
    pub fn code(&self) -> u32 {
        match self {
            Self::Shape(_) => 1,
            Self::StaleCache => 2,
            Self::NonFinite(_) => 3,
            Self::MissingAdvantages => 4,
            Self::Config(_) => 5,
            Self::Diverged { .. } => 6,
            Self::BadMagic => 10,
            Self::Version(_) => 11,
            Self::Truncated { .. } => 12,
            Self::Format(_) => 13,
            Self::Io { .. } => 14,
        }
    }
}

/// Deterministic policy: scales raw observations and returns the mean
/// action.
#[derive(Debug, Clone)]
pub struct Controller {
    pub policy: PolicyParams,
    scale: Vec<f64>,
}

impl Controller {
    pub fn new(policy: PolicyParams, mode: ObservationMode) -> Result<Self, PolicyError> {
        policy.validate()?;
        let joints = policy.output_size();
        let scale = observation_scale(mode, joints);
        if scale.len() != policy.input_size() {
            return Err(PolicyError::Shape(format!(
                "policy takes {} inputs, {mode:?} observations have {}",
                policy.input_size(),
                scale.len()
            )));
        }
        Ok(Self { policy, scale })
    }

    /// Observation mode matching the policy's input size for `joints`.
    pub fn mode_for(policy: &PolicyParams) -> Option<ObservationMode> {
        let joints = policy.output_size();
        [ObservationMode::Blind, ObservationMode::Perceptive]
            .into_iter()
            .find(|m| m.len(joints) == policy.input_size())
    }

    pub fn act(&self, observation: &[f64]) -> Result<Vec<f64>, PolicyError> {
        let x: Vec<f64> = observation.iter().zip(&self.scale).map(|(o, s)| o * s).collect();
        let input = Array2::from_shape_vec((1, x.len()), x)
            .map_err(|e| PolicyError::Shape(e.to_string()))?;
        Ok(self.policy.predict(input.view())?.row(0).to_vec())
    }
}
