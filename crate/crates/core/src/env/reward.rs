//! Velocity-tracking reward with small regularizers.

use serde::{Deserialize, Serialize};

/// Kernel width of the exponential tracking terms, (m/s)² and (rad/s)².
pub const TRACKING_SIGMA: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardWeights {
    pub velocity: f64,
    pub angular_rate: f64,
    pub torque: f64,
    pub action_rate: f64,
    pub orientation: f64,
    pub joint_accel: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            velocity: 1.0,
            angular_rate: 0.5,
            torque: 2e-4,
            action_rate: 0.01,
            orientation: 0.5,
            joint_accel: 2.5e-7,
        }
    }
}

/// Unweighted terms and their weighted sum. Penalties are ≤ 0.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardTerms {
    pub velocity: f64,
    pub angular_rate: f64,
    pub torque: f64,
    pub action_rate: f64,
    pub orientation: f64,
    pub joint_accel: f64,
    pub total: f64,
}

/// Quantities the reward reads from one policy-rate transition.
#[derive(Debug, Clone, Copy)]
pub struct RewardInputs<'a> {
    /// World-frame forward base velocity, m/s.
    pub forward_velocity: f64,
    /// rad/s
    pub pitch_rate: f64,
    /// x component of the gravity direction in the base frame.
    pub gravity_x: f64,
    pub torque: &'a [f64],
    pub action: &'a [f64],
    pub previous_action: &'a [f64],
    pub joint_velocity: &'a [f64],
    pub previous_joint_velocity: &'a [f64],
    /// Policy period, s.
    pub dt: f64,
    pub command: f64,
}

pub fn compute_reward(input: &RewardInputs<'_>, w: &RewardWeights) -> RewardTerms {
    let sq = |x: f64| x * x;
    let velocity = (-sq(input.forward_velocity - input.command) / TRACKING_SIGMA).exp();
    let angular_rate = (-sq(input.pitch_rate) / TRACKING_SIGMA).exp();
    let torque = -input.torque.iter().map(|t| t * t).sum::<f64>();
    let action_rate = -input
        .action
        .iter()
        .zip(input.previous_action)
        .map(|(a, b)| sq(a - b))
        .sum::<f64>();
    let orientation = -sq(input.gravity_x);
    let joint_accel = -input
        .joint_velocity
        .iter()
        .zip(input.previous_joint_velocity)
        .map(|(v, p)| sq((v - p) / input.dt))
        .sum::<f64>();
    let total = w.velocity * velocity
        + w.angular_rate * angular_rate
        + w.torque * torque
        + w.action_rate * action_rate
        + w.orientation * orientation
        + w.joint_accel * joint_accel;
    RewardTerms {
        velocity,
        angular_rate,
        torque,
        action_rate,
        orientation,
        joint_accel,
        total,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs<'a>(v: f64, cmd: f64, zeros: &'a [f64]) -> RewardInputs<'a> {
        RewardInputs {
            forward_velocity: v,
            pitch_rate: 0.0,
            gravity_x: 0.0,
            torque: zeros,
            action: zeros,
            previous_action: zeros,
            joint_velocity: zeros,
            previous_joint_velocity: zeros,
            dt: 0.02,
            command: cmd,
        }
    }

    #[test]
    fn tracking_kernel() {
        let z = [0.0; 4];
        let w = RewardWeights::default();
        assert_eq!(compute_reward(&inputs(0.5, 0.5, &z), &w).velocity, 1.0);
        let r = compute_reward(&inputs(0.0, 0.5, &z), &w);
        assert!((r.velocity - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn zero_inputs_zero_penalties() {
        let z = [0.0; 4];
        let r = compute_reward(&inputs(0.0, 0.0, &z), &RewardWeights::default());
        assert_eq!(
            (r.torque, r.action_rate, r.orientation, r.joint_accel),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert_eq!(r.total, 1.5);
    }
}
