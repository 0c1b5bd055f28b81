//! Policy observation vector.
//!
//! Layout, in order: gravity direction in the base frame (2), base linear
//! and pitch velocity in the base frame (3), joint-position-error history
//! (3 × joints), joint-velocity history (3 × joints), previous action
//! (joints), forward velocity command (1), and in perceptive mode a forward
//! height scan (11). Histories run oldest to newest.

use std::collections::VecDeque;

use crate::rbd::{kinematics::rotate, Terrain, Vec2};

pub const HISTORY_LEN: usize = 3;
pub const SCAN_POINTS: usize = 11;
/// m
pub const SCAN_SPACING: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ObservationMode {
    #[default]
    Blind,
    Perceptive,
}

impl ObservationMode {
    pub fn len(self, joints: usize) -> usize {
        let blind = 2 + 3 + 2 * HISTORY_LEN * joints + joints + 1;
        match self {
            Self::Blind => blind,
            Self::Perceptive => blind + SCAN_POINTS,
        }
    }
}

/// Rolling per-joint history at the policy rate.
#[derive(Debug, Clone, PartialEq)]
pub struct JointHistory {
    pub position_error: VecDeque<Vec<f64>>,
    pub velocity: VecDeque<Vec<f64>>,
}

impl JointHistory {
    /// Zero-padded.
    pub fn new(joints: usize) -> Self {
        Self {
            position_error: (0..HISTORY_LEN).map(|_| vec![0.0; joints]).collect(),
            velocity: (0..HISTORY_LEN).map(|_| vec![0.0; joints]).collect(),
        }
    }

    pub fn push(&mut self, position_error: Vec<f64>, velocity: Vec<f64>) {
        self.position_error.pop_front();
        self.position_error.push_back(position_error);
        self.velocity.pop_front();
        self.velocity.push_back(velocity);
    }
}

/// Gravity unit vector expressed in the base frame of a torso pitched by
/// `pitch`.
pub fn gravity_in_base(pitch: f64) -> Vec2 {
    rotate(-pitch, Vec2::new(0.0, -1.0))
}

/// Base pose and velocity as seen by the policy.
#[derive(Debug, Clone, Copy)]
pub struct BaseReading {
    pub x: f64,
    pub z: f64,
    pub pitch: f64,
    /// World frame.
    pub velocity: Vec2,
    pub pitch_rate: f64,
}

pub fn build_observation(
    base: &BaseReading,
    previous_action: &[f64],
    command: f64,
    history: &JointHistory,
    terrain: &(impl Terrain + ?Sized),
    mode: ObservationMode,
) -> Vec<f64> {
    let joints = previous_action.len();
    let mut obs = Vec::with_capacity(mode.len(joints));
    let g = gravity_in_base(base.pitch);
    obs.extend([g.x, g.y]);
    let v = rotate(-base.pitch, base.velocity);
    obs.extend([v.x, v.y, base.pitch_rate]);
    for e in &history.position_error {
        obs.extend(e);
    }
    for v in &history.velocity {
        obs.extend(v);
    }
    obs.extend(previous_action);
    obs.push(command);
    if mode == ObservationMode::Perceptive {
        obs.extend(
            (0..SCAN_POINTS).map(|k| terrain.height(base.x + k as f64 * SCAN_SPACING) - base.z),
        );
    }
    obs
}

/// Fixed per-entry input scaling applied before the network, chosen so that
/// typical magnitudes are of order one.
pub fn observation_scale(mode: ObservationMode, joints: usize) -> Vec<f64> {
    let mut s = Vec::with_capacity(mode.len(joints));
    s.extend([1.0, 1.0]);
    s.extend([2.0, 2.0, 0.25]);
    s.extend(std::iter::repeat_n(1.0, HISTORY_LEN * joints));
    s.extend(std::iter::repeat_n(0.05, HISTORY_LEN * joints));
    s.extend(std::iter::repeat_n(1.0, joints));
    s.push(2.0);
    if mode == ObservationMode::Perceptive {
        s.extend(std::iter::repeat_n(2.0, SCAN_POINTS));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rbd::FlatGround;

    fn level(z: f64) -> BaseReading {
        BaseReading {
            x: 0.0,
            z,
            pitch: 0.0,
            velocity: Vec2::zeros(),
            pitch_rate: 0.0,
        }
    }

    #[test]
    fn arity() {
        assert_eq!(ObservationMode::Blind.len(4), 34);
        assert_eq!(ObservationMode::Perceptive.len(4), 45);
        assert_eq!(observation_scale(ObservationMode::Perceptive, 4).len(), 45);
    }

    #[test]
    fn resting_robot() {
        let h = JointHistory::new(4);
        let obs = build_observation(
            &level(0.55),
            &[0.0; 4],
            0.0,
            &h,
            &FlatGround::default(),
            ObservationMode::Perceptive,
        );
        assert_eq!(obs.len(), 45);
        assert_eq!(&obs[..2], &[0.0, -1.0]);
        assert!(obs[2..34].iter().all(|v| *v == 0.0));
        assert!(obs[34..].iter().all(|v| *v == -0.55));
    }

    #[test]
    fn pitched_gravity() {
        let g = gravity_in_base(0.1);
        assert!((g.x - 0.1f64.sin()).abs() < 1e-15);
        assert!((g.y + 0.1f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn history_order() {
        let mut h = JointHistory::new(1);
        h.push(vec![1.0], vec![10.0]);
        h.push(vec![2.0], vec![20.0]);
        let obs = build_observation(
            &level(0.5),
            &[0.0],
            0.0,
            &h,
            &FlatGround::default(),
            ObservationMode::Blind,
        );
        assert_eq!(&obs[5..8], &[0.0, 1.0, 2.0]);
        assert_eq!(&obs[8..11], &[0.0, 10.0, 20.0]);
    }
}
