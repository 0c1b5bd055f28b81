//! Planar forward kinematics and point Jacobians.
//!
//! World frame: x forward, z up. Angles follow a rotation about the lateral
//! axis, so a positive base pitch tips the torso's front end downward.

use nalgebra::DMatrix;

use super::{RobotModel, Vec2};
use crate::rbd::model::Parent;

/// Rotates a frame-local vector into the world by `angle`.
#[inline]
pub fn rotate(angle: f64, v: Vec2) -> Vec2 {
    let (s, c) = angle.sin_cos();
    Vec2::new(c * v.x + s * v.y, -s * v.x + c * v.y)
}

/// Derivative of `rotate(angle, v)` with respect to `angle`, written in terms
/// of the rotated vector `r`.
#[inline]
pub fn perp(r: Vec2) -> Vec2 {
    Vec2::new(r.y, -r.x)
}

/// Frame 0 is the base; frame `i + 1` is link `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kinematics {
    /// World orientation of every frame, rad.
    pub angles: Vec<f64>,
    /// World position of every frame origin (base origin, then joint positions).
    pub origins: Vec<Vec2>,
    /// World CoM of the torso followed by each link.
    pub coms: Vec<Vec2>,
    pub feet: Vec<Vec2>,
}

impl Kinematics {
    pub fn torso_points(&self, model: &RobotModel) -> Vec<Vec2> {
        model
            .torso_points
            .iter()
            .map(|p| self.origins[0] + rotate(self.angles[0], *p))
            .collect()
    }
}

#[inline]
pub(crate) fn parent_frame(parent: Parent) -> usize {
    match parent {
        Parent::Base => 0,
        Parent::Link(p) => p + 1,
    }
}

pub fn forward_kinematics(model: &RobotModel, q: &[f64]) -> Kinematics {
    let (x, z, pitch) = model.base_pose(q);
    let nb = model.base_dofs();
    let n = model.num_joints();
    let mut angles = Vec::with_capacity(n + 1);
    let mut origins = Vec::with_capacity(n + 1);
    angles.push(pitch);
    origins.push(Vec2::new(x, z));
    for (i, joint) in model.joints.iter().enumerate() {
        let pf = parent_frame(joint.parent);
        let origin = origins[pf] + rotate(angles[pf], joint.offset);
        angles.push(angles[pf] + q[nb + i]);
        origins.push(origin);
    }
    let mut coms = Vec::with_capacity(n + 1);
    coms.push(origins[0] + rotate(angles[0], model.torso.com));
    for (i, link) in model.links.iter().enumerate() {
        coms.push(origins[i + 1] + rotate(angles[i + 1], link.com));
    }
    let feet = model
        .feet
        .iter()
        .map(|f| origins[f.link + 1] + rotate(angles[f.link + 1], f.offset))
        .collect();
    Kinematics {
        angles,
        origins,
        coms,
        feet,
    }
}

/// Jacobian columns (one 2-vector per DoF) of world point `p` rigidly attached
/// to `frame`.
pub fn point_jacobian(model: &RobotModel, kin: &Kinematics, frame: usize, p: Vec2) -> Vec<Vec2> {
    let mut cols = vec![Vec2::zeros(); model.ndof()];
    if model.is_floating() {
        cols[0] = Vec2::new(1.0, 0.0);
        cols[1] = Vec2::new(0.0, 1.0);
        cols[2] = perp(p - kin.origins[0]);
    }
    if frame > 0 {
        for &j in model.support(frame - 1) {
            cols[model.joint_dof(j)] = perp(p - kin.origins[j + 1]);
        }
    }
    cols
}

/// Stacked foot Jacobian: rows (2i, 2i + 1) are the (x, z) velocity of foot i.
pub fn contact_jacobian(model: &RobotModel, q: &[f64]) -> DMatrix<f64> {
    let kin = forward_kinematics(model, q);
    let n = model.ndof();
    let mut jac = DMatrix::zeros(2 * model.feet.len(), n);
    for (i, foot) in model.feet.iter().enumerate() {
        let cols = point_jacobian(model, &kin, foot.link + 1, kin.feet[i]);
        for (c, col) in cols.iter().enumerate() {
            jac[(2 * i, c)] = col.x;
            jac[(2 * i + 1, c)] = col.y;
        }
    }
    jac
}

/// Frame angular velocities, origin velocities and origin bias accelerations
/// (acceleration at zero generalized acceleration).
#[derive(Debug, Clone)]
pub(crate) struct FrameMotion {
    pub omega: Vec<f64>,
    pub velocity: Vec<Vec2>,
    pub bias_accel: Vec<Vec2>,
}

pub(crate) fn frame_motion(model: &RobotModel, kin: &Kinematics, u: &[f64]) -> FrameMotion {
    let n = model.num_joints();
    let nb = model.base_dofs();
    let mut omega = Vec::with_capacity(n + 1);
    let mut velocity = Vec::with_capacity(n + 1);
    let mut bias_accel = Vec::with_capacity(n + 1);
    if model.is_floating() {
        omega.push(u[2]);
        velocity.push(Vec2::new(u[0], u[1]));
    } else {
        omega.push(0.0);
        velocity.push(Vec2::zeros());
    }
    bias_accel.push(Vec2::zeros());
    for (i, joint) in model.joints.iter().enumerate() {
        let pf = parent_frame(joint.parent);
        let r = kin.origins[i + 1] - kin.origins[pf];
        let w = omega[pf];
        velocity.push(velocity[pf] + perp(r) * w);
        bias_accel.push(bias_accel[pf] - r * (w * w));
        omega.push(w + u[nb + i]);
    }
    FrameMotion {
        omega,
        velocity,
        bias_accel,
    }
}
