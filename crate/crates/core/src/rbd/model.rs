//! Kinematic and inertial description of planar articulated robots.

use std::fmt::Write as _;

use super::{ModelError, Vec2};

/// Inertial and geometric data of one rigid body.
#[derive(Debug, Clone, PartialEq)]
pub struct Body {
    /// kg
    pub mass: f64,
    /// Rotational inertia about the body's own center of mass, kg·m².
    pub inertia: f64,
    /// m
    pub length: f64,
    /// Center of mass in the body frame, m.
    pub com: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parent {
    Base,
    Link(usize),
}

/// Revolute joint driving the link with the same index.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent: Parent,
    /// Joint position in the parent frame, m.
    pub offset: Vec2,
    pub lower: f64,
    pub upper: f64,
    pub velocity_limit: f64,
    pub torque_limit: f64,
    pub nominal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseKind {
    /// Three unactuated planar DoFs (x, z, pitch) lead the coordinate vector.
    Floating,
    /// Base welded to the world at the given pose.
    Fixed { x: f64, z: f64, pitch: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Foot {
    pub link: usize,
    /// Contact point in the link frame, m.
    pub offset: Vec2,
    /// Multiplier on the ground friction coefficient.
    pub friction_scale: f64,
}

/// Penalty contact constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactParams {
    /// N/m
    pub stiffness: f64,
    /// N·s/m
    pub damping: f64,
    /// N·s/m
    pub tangential_damping: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            stiffness: 40_000.0,
            damping: 400.0,
            tangential_damping: 2_000.0,
        }
    }
}

/// A validated planar articulated robot. Joint `i` drives link `i`; links are
/// stored in topological order so every parent precedes its children.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub base: BaseKind,
    pub torso: Body,
    pub links: Vec<Body>,
    pub joints: Vec<Joint>,
    pub feet: Vec<Foot>,
    /// Torso outline points used for torso/ground collision checks, torso frame.
    pub torso_points: Vec<Vec2>,
    pub contact: ContactParams,
    /// Ancestor joints of each link, root first, including the link's own joint.
    support: Vec<Vec<usize>>,
}

fn positive(field: &str, value: f64) -> Result<(), ModelError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::NonPositive {
            field: field.to_string(),
            value,
        })
    }
}

impl RobotModel {
    pub fn new(
        base: BaseKind,
        torso: Body,
        links: Vec<Body>,
        joints: Vec<Joint>,
        feet: Vec<Foot>,
        torso_points: Vec<Vec2>,
        contact: ContactParams,
    ) -> Result<Self, ModelError> {
        positive("torso.mass", torso.mass)?;
        positive("torso.inertia", torso.inertia)?;
        positive("torso.length", torso.length)?;
        if links.len() != joints.len() {
            return Err(ModelError::Topology(format!(
                "{} links but {} joints",
                links.len(),
                joints.len()
            )));
        }
        for (i, link) in links.iter().enumerate() {
            let name = &joints[i].name;
            positive(&format!("{name}.mass"), link.mass)?;
            positive(&format!("{name}.inertia"), link.inertia)?;
            positive(&format!("{name}.length"), link.length)?;
        }
        let mut support: Vec<Vec<usize>> = Vec::with_capacity(joints.len());
        for (i, joint) in joints.iter().enumerate() {
            let mut chain = match joint.parent {
                Parent::Base => Vec::new(),
                Parent::Link(p) if p < i => support[p].clone(),
                Parent::Link(p) => {
                    return Err(ModelError::Topology(format!(
                        "joint {} has parent link {p}, which does not precede it",
                        joint.name
                    )))
                }
            };
            if !(joint.lower <= joint.upper) {
                return Err(ModelError::Topology(format!(
                    "joint {} has lower limit above upper limit",
                    joint.name
                )));
            }
            positive(&format!("{}.velocity_limit", joint.name), joint.velocity_limit)?;
            positive(&format!("{}.torque_limit", joint.name), joint.torque_limit)?;
            chain.push(i);
            support.push(chain);
        }
        for foot in &feet {
            if foot.link >= links.len() {
                return Err(ModelError::Topology(format!(
                    "foot attached to missing link {}",
                    foot.link
                )));
            }
        }
        positive("contact.stiffness", contact.stiffness)?;
        Ok(Self {
            base,
            torso,
            links,
            joints,
            feet,
            torso_points,
            contact,
            support,
        })
    }

    pub fn is_floating(&self) -> bool {
        matches!(self.base, BaseKind::Floating)
    }

    /// Number of base coordinates leading q and u.
    pub fn base_dofs(&self) -> usize {
        if self.is_floating() {
            3
        } else {
            0
        }
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn ndof(&self) -> usize {
        self.base_dofs() + self.joints.len()
    }

    pub fn joint_dof(&self, joint: usize) -> usize {
        self.base_dofs() + joint
    }

    pub fn support(&self, link: usize) -> &[usize] {
        &self.support[link]
    }

    pub fn total_mass(&self) -> f64 {
        self.torso.mass + self.links.iter().map(|l| l.mass).sum::<f64>()
    }

    pub fn nominal_joint_positions(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.nominal).collect()
    }

    pub fn torque_limits(&self) -> Vec<f64> {
        self.joints.iter().map(|j| j.torque_limit).collect()
    }

    /// Base pose (x, z, pitch) for coordinates `q`.
    pub fn base_pose(&self, q: &[f64]) -> (f64, f64, f64) {
        match self.base {
            BaseKind::Floating => (q[0], q[1], q[2]),
            BaseKind::Fixed { x, z, pitch } => (x, z, pitch),
        }
    }
}

/// Parameter set for the planar quadruped: a torso with a front and a hind
/// leg, each leg a thigh and a shank joined by hip and knee joints.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub torso_mass: f64,
    pub torso_inertia: f64,
    pub torso_length: f64,
    pub torso_height: f64,
    pub link_mass: f64,
    pub link_inertia: f64,
    pub link_length: f64,
    /// CoM position along each leg link as a fraction of its length.
    pub link_com_fraction: f64,
    /// Horizontal distance of each hip from the torso center.
    pub hip_offset: f64,
    pub hip_lower: f64,
    pub hip_upper: f64,
    pub knee_lower: f64,
    pub knee_upper: f64,
    pub nominal_hip: f64,
    pub nominal_knee: f64,
    /// Hips open by this much at the nominal pose (front hip −, hind hip +),
    /// placing the feet outside the hips so the stance resists sway.
    pub stance_splay: f64,
    pub velocity_limit: f64,
    pub torque_limit: f64,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub tangential_damping: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            torso_mass: 10.0,
            torso_inertia: 0.3,
            torso_length: 0.6,
            torso_height: 0.1,
            link_mass: 1.0,
            link_inertia: 0.0075,
            link_length: 0.3,
            link_com_fraction: 0.5,
            hip_offset: 0.25,
            hip_lower: -1.5,
            hip_upper: 1.5,
            knee_lower: -2.6,
            knee_upper: 0.1,
            nominal_hip: 0.25,
            nominal_knee: -0.5,
            stance_splay: 0.15,
            velocity_limit: 25.0,
            torque_limit: 12.0,
            contact_stiffness: 40_000.0,
            contact_damping: 400.0,
            tangential_damping: 2_000.0,
        }
    }
}

macro_rules! model_param_fields {
    ($mac:ident) => {
        $mac!(
            torso_mass,
            torso_inertia,
            torso_length,
            torso_height,
            link_mass,
            link_inertia,
            link_length,
            link_com_fraction,
            hip_offset,
            hip_lower,
            hip_upper,
            knee_lower,
            knee_upper,
            nominal_hip,
            nominal_knee,
            stance_splay,
            velocity_limit,
            torque_limit,
            contact_stiffness,
            contact_damping,
            tangential_damping
        )
    };
}

impl ModelParams {
    pub fn entries(&self) -> Vec<(&'static str, f64)> {
        macro_rules! list {
            ($($f:ident),*) => { vec![$((stringify!($f), self.$f)),*] };
        }
        model_param_fields!(list)
    }

    pub fn keys() -> Vec<&'static str> {
        Self::default().entries().into_iter().map(|(k, _)| k).collect()
    }

    pub fn set(&mut self, key: &str, value: f64) -> Result<(), ModelError> {
        macro_rules! assign {
            ($($f:ident),*) => {
                match key {
                    $(stringify!($f) => self.$f = value,)*
                    _ => return Err(ModelError::UnknownKey(key.to_string())),
                }
            };
        }
        model_param_fields!(assign);
        Ok(())
    }

    /// `key = value` lines in declaration order; floats use the shortest
    /// representation that parses back to the same bits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v:?}");
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self, ModelError> {
        let mut params = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ModelError::Parse {
                line: n + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let value: f64 = v.trim().parse().map_err(|_| ModelError::Parse {
                line: n + 1,
                message: format!("`{}` is not a number", v.trim()),
            })?;
            params.set(k.trim(), value)?;
        }
        Ok(params)
    }

    pub fn nominal_total_mass(&self) -> f64 {
        self.torso_mass + 4.0 * self.link_mass
    }

    /// Torso height above flat ground with both legs at their nominal angles.
    pub fn nominal_standing_height(&self) -> f64 {
        let l = self.link_length;
        let leg = |hip: f64| l * hip.cos() + l * (hip + self.nominal_knee).cos();
        leg(self.nominal_hip - self.stance_splay).max(leg(self.nominal_hip + self.stance_splay))
    }
}

/// Builds and validates the planar quadruped described by `params`.
pub fn build_model(params: &ModelParams) -> Result<RobotModel, ModelError> {
    positive("torso_mass", params.torso_mass)?;
    positive("torso_inertia", params.torso_inertia)?;
    positive("torso_length", params.torso_length)?;
    positive("torso_height", params.torso_height)?;
    positive("link_mass", params.link_mass)?;
    positive("link_inertia", params.link_inertia)?;
    positive("link_length", params.link_length)?;
    positive("velocity_limit", params.velocity_limit)?;
    positive("torque_limit", params.torque_limit)?;
    positive("contact_stiffness", params.contact_stiffness)?;
    if !(0.0..=1.0).contains(&params.link_com_fraction) {
        return Err(ModelError::OutOfRange {
            field: "link_com_fraction".into(),
            value: params.link_com_fraction,
        });
    }
    if params.contact_damping < 0.0 || params.tangential_damping < 0.0 {
        return Err(ModelError::OutOfRange {
            field: "contact_damping".into(),
            value: params.contact_damping.min(params.tangential_damping),
        });
    }
    let l = params.link_length;
    let link = Body {
        mass: params.link_mass,
        inertia: params.link_inertia,
        length: l,
        com: Vec2::new(0.0, -l * params.link_com_fraction),
    };
    let torso = Body {
        mass: params.torso_mass,
        inertia: params.torso_inertia,
        length: params.torso_length,
        com: Vec2::zeros(),
    };
    let joint = |name: &str, parent, offset, hip: bool, splay: f64| Joint {
        name: name.to_string(),
        parent,
        offset,
        lower: if hip { params.hip_lower } else { params.knee_lower },
        upper: if hip { params.hip_upper } else { params.knee_upper },
        velocity_limit: params.velocity_limit,
        torque_limit: params.torque_limit,
        nominal: if hip {
            params.nominal_hip + splay
        } else {
            params.nominal_knee
        },
    };
    let knee_offset = Vec2::new(0.0, -l);
    let joints = vec![
        joint(
            "front_hip",
            Parent::Base,
            Vec2::new(params.hip_offset, 0.0),
            true,
            -params.stance_splay,
        ),
        joint("front_knee", Parent::Link(0), knee_offset, false, 0.0),
        joint(
            "hind_hip",
            Parent::Base,
            Vec2::new(-params.hip_offset, 0.0),
            true,
            params.stance_splay,
        ),
        joint("hind_knee", Parent::Link(2), knee_offset, false, 0.0),
    ];
    for j in &joints {
        if !(j.lower <= j.nominal && j.nominal <= j.upper) {
            return Err(ModelError::OutOfRange {
                field: format!("nominal_{}", if j.name.ends_with("hip") { "hip" } else { "knee" }),
                value: j.nominal,
            });
        }
    }
    let foot = |link| Foot {
        link,
        offset: Vec2::new(0.0, -l),
        friction_scale: 1.0,
    };
    let half_l = params.torso_length / 2.0;
    let half_h = params.torso_height / 2.0;
    let torso_points = vec![
        Vec2::new(half_l, half_h),
        Vec2::new(half_l, -half_h),
        Vec2::new(-half_l, half_h),
        Vec2::new(-half_l, -half_h),
    ];
    let model = RobotModel::new(
        BaseKind::Floating,
        torso,
        vec![link.clone(), link.clone(), link.clone(), link],
        joints,
        vec![foot(1), foot(3)],
        torso_points,
        ContactParams {
            stiffness: params.contact_stiffness,
            damping: params.contact_damping,
            tangential_damping: params.tangential_damping,
        },
    )?;
    if model.num_joints() != 4 {
        return Err(ModelError::Topology("quadruped needs exactly 4 joints".into()));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_quadruped_mass() {
        let params = ModelParams::default();
        let model = build_model(&params).unwrap();
        assert_eq!(model.total_mass(), 14.0);
        assert_eq!(params.nominal_total_mass(), 14.0);
        assert_eq!(model.ndof(), 7);
        assert_eq!(model.feet.len(), 2);
    }

    #[test]
    fn zero_torso_mass_is_rejected() {
        let params = ModelParams {
            torso_mass: 0.0,
            ..Default::default()
        };
        match build_model(&params) {
            Err(ModelError::NonPositive { field, .. }) => assert_eq!(field, "torso_mass"),
            other => panic!("expected validation error, got {other:?}"),
        }
        let params = ModelParams {
            link_inertia: -1.0,
            ..Default::default()
        };
        assert!(matches!(
            build_model(&params),
            Err(ModelError::NonPositive { field, .. }) if field == "link_inertia"
        ));
    }

    #[test]
    fn text_round_trip() {
        let params = ModelParams::default();
        let parsed = ModelParams::parse_text(&params.to_text()).unwrap();
        assert_eq!(parsed, params);

        let odd = ModelParams {
            torso_mass: 10.1 + 1e-13,
            nominal_knee: -0.1 - 0.2,
            ..Default::default()
        };
        assert_eq!(ModelParams::parse_text(&odd.to_text()).unwrap(), odd);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(matches!(
            ModelParams::parse_text("torso_mas = 3"),
            Err(ModelError::UnknownKey(k)) if k == "torso_mas"
        ));
    }

    #[test]
    fn topology_must_be_ordered() {
        let body = Body {
            mass: 1.0,
            inertia: 0.1,
            length: 0.3,
            com: Vec2::zeros(),
        };
        let joint = Joint {
            name: "j".into(),
            parent: Parent::Link(1),
            offset: Vec2::zeros(),
            lower: -1.0,
            upper: 1.0,
            velocity_limit: 1.0,
            torque_limit: 1.0,
            nominal: 0.0,
        };
        let err = RobotModel::new(
            BaseKind::Floating,
            body.clone(),
            vec![body.clone(), body],
            vec![joint.clone(), joint],
            vec![],
            vec![],
            ContactParams::default(),
        );
        assert!(matches!(err, Err(ModelError::Topology(_))));
    }
}
