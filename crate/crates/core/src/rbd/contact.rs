//! Spring-damper penalty contact with a Coulomb clamp.
//!
//! The ground normal is taken as world +z everywhere; tangential forces act
//! along world x.

use super::kinematics::{forward_kinematics, frame_motion, perp, Kinematics};
use super::{RobotModel, Vec2};

/// Height query for the ground under the robot.
pub trait Terrain: Sync {
    fn height(&self, x: f64) -> f64;
    /// Ground friction coefficient.
    fn friction(&self) -> f64;
}

/// Horizontal plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatGround {
    pub height: f64,
    pub friction: f64,
}

impl Default for FlatGround {
    fn default() -> Self {
        Self {
            height: 0.0,
            friction: 0.5,
        }
    }
}

impl Terrain for FlatGround {
    fn height(&self, _x: f64) -> f64 {
        self.height
    }
    fn friction(&self) -> f64 {
        self.friction
    }
}

/// No ground at all.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoGround;

impl Terrain for NoGround {
    fn height(&self, _x: f64) -> f64 {
        f64::NEG_INFINITY
    }
    fn friction(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FootContact {
    pub in_contact: bool,
    /// N, never negative.
    pub normal: f64,
    /// N, along world x.
    pub tangential: f64,
    /// m, zero when not in contact.
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactState {
    pub feet: Vec<FootContact>,
}

impl ContactState {
    pub fn num_in_contact(&self) -> usize {
        self.feet.iter().filter(|f| f.in_contact).count()
    }
}

/// Per-foot penetration and world velocity at the contact point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FootProbe {
    pub depth: f64,
    pub velocity: Vec2,
    pub mu: f64,
}

pub(crate) fn probe_feet(
    model: &RobotModel,
    kin: &Kinematics,
    u: &[f64],
    terrain: &(impl Terrain + ?Sized),
) -> Vec<FootProbe> {
    let motion = frame_motion(model, kin, u);
    model
        .feet
        .iter()
        .zip(&kin.feet)
        .map(|(foot, p)| {
            let f = foot.link + 1;
            let velocity = motion.velocity[f] + perp(p - kin.origins[f]) * motion.omega[f];
            FootProbe {
                depth: terrain.height(p.x) - p.y,
                velocity,
                mu: terrain.friction() * foot.friction_scale,
            }
        })
        .collect()
}

/// Clamps a candidate force pair into the admissible set: normal ≥ 0 and
/// |tangential| ≤ μ·normal.
#[inline]
pub(crate) fn clamp_to_cone(normal: f64, tangential: f64, mu: f64) -> (f64, f64) {
    let n = normal.max(0.0);
    let bound = mu * n;
    (n, tangential.clamp(-bound, bound))
}

pub(crate) fn foot_force(model: &RobotModel, probe: &FootProbe) -> FootContact {
    if !(probe.depth > 0.0) {
        return FootContact::default();
    }
    let c = &model.contact;
    let depth_rate = -probe.velocity.y;
    let (normal, tangential) = clamp_to_cone(
        c.stiffness * probe.depth + c.damping * depth_rate,
        -c.tangential_damping * probe.velocity.x,
        probe.mu,
    );
    FootContact {
        in_contact: true,
        normal,
        tangential,
        depth: probe.depth,
    }
}

pub fn contact_forces(
    model: &RobotModel,
    q: &[f64],
    u: &[f64],
    terrain: &(impl Terrain + ?Sized),
) -> ContactState {
    let kin = forward_kinematics(model, q);
    let feet = probe_feet(model, &kin, u, terrain)
        .iter()
        .map(|p| foot_force(model, p))
        .collect();
    ContactState { feet }
}
