//! Equations of motion `M u̇ + h = Sᵀτ + Jᵀλ + Q_ext` and their integration.
//!
//! The integrator advances generalized momentum `p = M u` with a
//! semi-implicit Euler step: momentum first from forces at the current
//! state, then positions from the updated velocity. Contact damping enters
//! through a linearly implicit predictor so the stiff penalty terms stay
//! stable at the 2.5 ms control period. Because momentum rather than
//! velocity is integrated, base momentum is conserved to round-off when no
//! external force acts.

use nalgebra::{DMatrix, DVector};

use super::contact::{clamp_to_cone, probe_feet, ContactState, FootContact, Terrain};
use super::kinematics::{forward_kinematics, frame_motion, perp, point_jacobian, Kinematics};
use super::{DynamicsError, RobotModel, Vec2};

pub const STANDARD_GRAVITY: f64 = -9.81;

/// Generalized coordinates `q = (x, z, pitch, joints…)`, velocities `u` and
/// simulation time.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedState {
    pub q: Vec<f64>,
    pub u: Vec<f64>,
    pub time: f64,
}

impl GeneralizedState {
    pub fn at_rest(q: Vec<f64>) -> Self {
        let n = q.len();
        Self {
            q,
            u: vec![0.0; n],
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.time.is_finite() && self.q.iter().chain(&self.u).all(|v| v.is_finite())
    }
}

/// Force and pitch torque applied at the torso CoM while active.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalWrench {
    /// N, world frame (x, z).
    pub force: Vec2,
    /// N·m about the pitch axis.
    pub torque: f64,
    /// s
    pub start: f64,
    /// s
    pub duration: f64,
}

impl ExternalWrench {
    pub fn none() -> Self {
        Self {
            force: Vec2::zeros(),
            torque: 0.0,
            start: 0.0,
            duration: 0.0,
        }
    }

    pub fn constant(force: Vec2, torque: f64) -> Self {
        Self {
            force,
            torque,
            start: 0.0,
            duration: f64::INFINITY,
        }
    }

    pub fn is_active(&self, t: f64) -> bool {
        t >= self.start && t < self.start + self.duration
    }

    pub fn is_zero(&self) -> bool {
        self.force == Vec2::zeros() && self.torque == 0.0
    }
}

impl Default for ExternalWrench {
    fn default() -> Self {
        Self::none()
    }
}

/// Per-body Jacobian data shared by the mass matrix and force terms.
pub(crate) struct Terms {
    pub mass: DMatrix<f64>,
    /// Coriolis, centrifugal and gravity terms `h`.
    pub bias: DVector<f64>,
    /// `∂L/∂q`: the momentum rate with no applied force.
    pub lagrangian: DVector<f64>,
}

fn rotational_columns(model: &RobotModel, frame: usize) -> impl Iterator<Item = usize> + '_ {
    let base = model.is_floating().then_some(2);
    let joints: &[usize] = if frame == 0 {
        &[]
    } else {
        model.support(frame - 1)
    };
    base.into_iter()
        .chain(joints.iter().map(|&j| model.joint_dof(j)))
}

pub(crate) fn mass_matrix_from(model: &RobotModel, kin: &Kinematics) -> DMatrix<f64> {
    let n = model.ndof();
    let mut m = DMatrix::zeros(n, n);
    let bodies = std::iter::once(&model.torso).chain(model.links.iter());
    for (f, body) in bodies.enumerate() {
        let jac = point_jacobian(model, kin, f, kin.coms[f]);
        for a in 0..n {
            if jac[a] == Vec2::zeros() {
                continue;
            }
            for b in a..n {
                let v = body.mass * jac[a].dot(&jac[b]);
                m[(a, b)] += v;
            }
        }
        let rot: Vec<usize> = rotational_columns(model, f).collect();
        for &a in &rot {
            for &b in &rot {
                if b >= a {
                    m[(a, b)] += body.inertia;
                }
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            m[(a, b)] = m[(b, a)];
        }
    }
    m
}

pub(crate) fn dynamics_terms(
    model: &RobotModel,
    kin: &Kinematics,
    u: &[f64],
    gravity: f64,
) -> Terms {
    let mass = mass_matrix_from(model, kin);
    let (bias, lagrangian) = velocity_terms(model, kin, u, gravity);
    Terms {
        mass,
        bias,
        lagrangian,
    }
}

/// `h` and `∂L/∂q` at velocity `u`.
fn velocity_terms(
    model: &RobotModel,
    kin: &Kinematics,
    u: &[f64],
    gravity: f64,
) -> (DVector<f64>, DVector<f64>) {
    let n = model.ndof();
    let motion = frame_motion(model, kin, u);
    let g = Vec2::new(0.0, gravity);
    let mut bias = DVector::zeros(n);
    let mut lagrangian = DVector::zeros(n);
    let bodies = std::iter::once(&model.torso).chain(model.links.iter());
    for (f, body) in bodies.enumerate() {
        let p = kin.coms[f];
        let r = p - kin.origins[f];
        let w = motion.omega[f];
        let v = motion.velocity[f] + perp(r) * w;
        let a = motion.bias_accel[f] - r * (w * w);
        let jac = point_jacobian(model, kin, f, p);
        let force = (a - g) * body.mass;
        for (c, col) in jac.iter().enumerate() {
            bias[c] += col.dot(&force);
            lagrangian[c] += body.mass * col.dot(&g);
        }
        // ∂T/∂q = Σ m J̇ᵀ v; only rotational columns have a nonzero J̇.
        if model.is_floating() {
            lagrangian[2] += body.mass * perp(v - motion.velocity[0]).dot(&v);
        }
        if f > 0 {
            for &j in model.support(f - 1) {
                let jd = perp(v - motion.velocity[j + 1]);
                lagrangian[model.joint_dof(j)] += body.mass * jd.dot(&v);
            }
        }
    }
    (bias, lagrangian)
}

/// Joint-space mass matrix, symmetric positive definite.
pub fn mass_matrix(model: &RobotModel, q: &[f64]) -> DMatrix<f64> {
    mass_matrix_from(model, &forward_kinematics(model, q))
}

/// Coriolis, centrifugal and gravity terms. `gravity` is the signed vertical
/// acceleration, e.g. -9.81.
pub fn bias_forces(model: &RobotModel, q: &[f64], u: &[f64], gravity: f64) -> DVector<f64> {
    dynamics_terms(model, &forward_kinematics(model, q), u, gravity).bias
}

/// Kinetic plus gravitational potential energy, J. Potential is zero at z = 0.
pub fn total_energy(model: &RobotModel, state: &GeneralizedState, gravity: f64) -> f64 {
    let kin = forward_kinematics(model, &state.q);
    let m = mass_matrix_from(model, &kin);
    let u = DVector::from_column_slice(&state.u);
    let kinetic = 0.5 * u.dot(&(&m * &u));
    let bodies = std::iter::once(&model.torso).chain(model.links.iter());
    let potential: f64 = bodies
        .zip(&kin.coms)
        .map(|(b, p)| -b.mass * gravity * p.y)
        .sum();
    kinetic + potential
}

pub fn kinetic_energy(model: &RobotModel, state: &GeneralizedState) -> f64 {
    let m = mass_matrix(model, &state.q);
    let u = DVector::from_column_slice(&state.u);
    0.5 * u.dot(&(&m * &u))
}

/// Total linear momentum and angular momentum about the world origin.
pub fn momentum(model: &RobotModel, state: &GeneralizedState) -> (Vec2, f64) {
    let kin = forward_kinematics(model, &state.q);
    let motion = frame_motion(model, &kin, &state.u);
    let mut linear = Vec2::zeros();
    let mut angular = 0.0;
    let bodies = std::iter::once(&model.torso).chain(model.links.iter());
    for (f, body) in bodies.enumerate() {
        let p = kin.coms[f];
        let w = motion.omega[f];
        let v = motion.velocity[f] + perp(p - kin.origins[f]) * w;
        linear += v * body.mass;
        angular += body.mass * perp(p).dot(&v) + body.inertia * w;
    }
    (linear, angular)
}

/// Result of one integration step, including the contact forces applied.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: GeneralizedState,
    pub contact: ContactState,
}

fn check_finite(values: &[f64], time: f64, what: &str) -> Result<(), DynamicsError> {
    match values.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(DynamicsError::NonFinite {
            time,
            what: format!("{what}[{i}] = {}", values[i]),
        }),
    }
}

fn solve_spd(m: DMatrix<f64>, rhs: &DVector<f64>, time: f64) -> Result<DVector<f64>, DynamicsError> {
    m.cholesky()
        .map(|c| c.solve(rhs))
        .ok_or(DynamicsError::SingularMassMatrix { time })
}

/// Advances the state by `dt`. `tau` holds one torque per joint, already
/// clamped to the actuator limits.
#[allow(clippy::too_many_arguments)]
pub fn step_dynamics(
    model: &RobotModel,
    state: &GeneralizedState,
    tau: &[f64],
    wrench: &ExternalWrench,
    terrain: &(impl Terrain + ?Sized),
    gravity: f64,
    dt: f64,
) -> Result<StepOutput, DynamicsError> {
    let n = model.ndof();
    let t = state.time;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(DynamicsError::InvalidTimestep(dt));
    }
    if tau.len() != model.num_joints() || state.q.len() != n || state.u.len() != n {
        return Err(DynamicsError::Dimension {
            expected: n,
            q: state.q.len(),
            u: state.u.len(),
            tau: tau.len(),
        });
    }
    check_finite(&state.q, t, "q")?;
    check_finite(&state.u, t, "u")?;
    check_finite(tau, t, "tau")?;

    let kin = forward_kinematics(model, &state.q);
    let terms = dynamics_terms(model, &kin, &state.u, gravity);
    let u = DVector::from_column_slice(&state.u);
    let p = &terms.mass * &u;

    // Applied generalized force without contact.
    let mut force = DVector::zeros(n);
    for (j, tj) in tau.iter().enumerate() {
        force[model.joint_dof(j)] += tj;
    }
    if wrench.is_active(t) && !wrench.is_zero() {
        let jac = point_jacobian(model, &kin, 0, kin.coms[0]);
        for (c, col) in jac.iter().enumerate() {
            force[c] += col.dot(&wrench.force);
        }
        for c in rotational_columns(model, 0) {
            force[c] += wrench.torque;
        }
    }

    // ∂L/∂q is taken at the end-of-step velocity, one fixed-point pass of
    // the implicit symplectic update; at the start-of-step velocity the
    // energy of free motion drifts at first order.
    let guess = solve_spd(terms.mass.clone(), &(&p + (&terms.lagrangian + &force) * dt), t)?;
    force += velocity_terms(model, &kin, guess.as_slice(), gravity).1;

    let probes = probe_feet(model, &kin, &state.u, terrain);
    let mut contact = ContactState {
        feet: vec![FootContact::default(); probes.len()],
    };
    if probes.iter().any(|pr| pr.depth > 0.0) {
        let c = model.contact;
        let mut lhs = terms.mass.clone();
        let mut rhs = &p + &force * dt;
        let mut jacs = Vec::with_capacity(probes.len());
        for (i, pr) in probes.iter().enumerate() {
            if !(pr.depth > 0.0) {
                jacs.push(None);
                continue;
            }
            let foot = &model.feet[i];
            let jac = point_jacobian(model, &kin, foot.link + 1, kin.feet[i]);
            for a in 0..n {
                rhs[a] += dt * jac[a].y * c.stiffness * pr.depth;
                for b in 0..n {
                    lhs[(a, b)] += dt
                        * (c.tangential_damping * jac[a].x * jac[b].x
                            + c.damping * jac[a].y * jac[b].y);
                }
            }
            jacs.push(Some(jac));
        }
        let predicted = lhs
            .lu()
            .solve(&rhs)
            .ok_or(DynamicsError::SingularMassMatrix { time: t })?;
        for (i, pr) in probes.iter().enumerate() {
            let Some(jac) = &jacs[i] else { continue };
            let v = jac
                .iter()
                .zip(predicted.iter())
                .fold(Vec2::zeros(), |acc, (col, ui)| acc + col * *ui);
            let (normal, tangential) = clamp_to_cone(
                c.stiffness * pr.depth - c.damping * v.y,
                -c.tangential_damping * v.x,
                pr.mu,
            );
            let f = Vec2::new(tangential, normal);
            for (a, col) in jac.iter().enumerate() {
                force[a] += col.dot(&f);
            }
            contact.feet[i] = FootContact {
                in_contact: true,
                normal,
                tangential,
                depth: pr.depth,
            };
        }
    }

    let p_next = p + force * dt;
    let u_mid = solve_spd(terms.mass, &p_next, t)?;
    let mut q_next: Vec<f64> = state
        .q
        .iter()
        .zip(u_mid.iter())
        .map(|(qi, ui)| qi + dt * ui)
        .collect();
    let mut at_stop = vec![0i8; model.num_joints()];
    for (j, joint) in model.joints.iter().enumerate() {
        let k = model.joint_dof(j);
        if q_next[k] > joint.upper {
            q_next[k] = joint.upper;
            at_stop[j] = 1;
        } else if q_next[k] < joint.lower {
            q_next[k] = joint.lower;
            at_stop[j] = -1;
        }
    }
    let m_next = mass_matrix(model, &q_next);
    let mut u_next: Vec<f64> = solve_spd(m_next, &p_next, t)?.iter().copied().collect();
    for (j, joint) in model.joints.iter().enumerate() {
        let k = model.joint_dof(j);
        if (at_stop[j] > 0 && u_next[k] > 0.0) || (at_stop[j] < 0 && u_next[k] < 0.0) {
            u_next[k] = 0.0;
        }
        u_next[k] = u_next[k].clamp(-joint.velocity_limit, joint.velocity_limit);
    }
    let time = t + dt;
    check_finite(&q_next, time, "q")?;
    check_finite(&u_next, time, "u")?;
    Ok(StepOutput {
        state: GeneralizedState {
            q: q_next,
            u: u_next,
            time,
        },
        contact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rbd::contact::{FlatGround, NoGround};
    use crate::rbd::model::{BaseKind, Body, ContactParams, Joint, Parent};
    use crate::rbd::{build_model, ModelParams};
    use std::f64::consts::PI;

    fn base_only(mass: f64, inertia: f64) -> RobotModel {
        RobotModel::new(
            BaseKind::Floating,
            Body {
                mass,
                inertia,
                length: 0.5,
                com: Vec2::zeros(),
            },
            vec![],
            vec![],
            vec![],
            vec![],
            ContactParams::default(),
        )
        .unwrap()
    }

    /// A single link hanging from a pivot at the origin, CoM at `lc` below it.
    pub(crate) fn pendulum(base: BaseKind, mass: f64, lc: f64, inertia: f64) -> RobotModel {
        RobotModel::new(
            base,
            Body {
                mass: 1.0,
                inertia: 1.0,
                length: 0.1,
                com: Vec2::zeros(),
            },
            vec![Body {
                mass,
                inertia,
                length: lc,
                com: Vec2::new(0.0, -lc),
            }],
            vec![Joint {
                name: "pivot".into(),
                parent: Parent::Base,
                offset: Vec2::zeros(),
                lower: -10.0,
                upper: 10.0,
                velocity_limit: 100.0,
                torque_limit: 100.0,
                nominal: 0.0,
            }],
            vec![],
            vec![],
            ContactParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn base_only_mass_matrix_is_diagonal() {
        let model = base_only(3.0, 0.2);
        for q in [[0.0, 0.0, 0.0], [1.0, -2.0, 0.7]] {
            let m = mass_matrix(&model, &q);
            assert_eq!(m, DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 3.0, 0.2])));
        }
    }

    #[test]
    fn statics_bias_is_weight() {
        let model = build_model(&ModelParams::default()).unwrap();
        let q = [0.0, 0.6, 0.1, 0.3, -0.5, 0.2, -0.6];
        let h = bias_forces(&model, &q, &[0.0; 7], STANDARD_GRAVITY);
        assert!((h[1] - 14.0 * 9.81).abs() < 1e-12);
        assert_eq!(h[0], 0.0);
        let h0 = bias_forces(&model, &q, &[0.0; 7], 0.0);
        assert!(h0.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn centrifugal_reaction_of_spinning_link() {
        let (m, lc, w) = (2.0, 0.4, 3.0);
        let model = pendulum(BaseKind::Floating, m, lc, 0.01);
        let q = [0.0, 0.0, 0.0, 0.3];
        let u = [0.0, 0.0, 0.0, w];
        let h = bias_forces(&model, &q, &u, 0.0);
        let reaction = Vec2::new(h[0], h[1]).norm();
        assert!((reaction - m * lc * w * w).abs() < 1e-9);
        // pointing from the CoM back toward the pivot
        let com_dir = crate::rbd::kinematics::rotate(0.3, Vec2::new(0.0, -1.0));
        assert!((Vec2::new(h[0], h[1]).normalize() + com_dir).norm() < 1e-12);
    }

    #[test]
    fn base_only_free_fall_matches_semi_implicit_euler() {
        let model = base_only(14.0, 0.3);
        let dt = 0.0025;
        let mut s = GeneralizedState::at_rest(vec![0.0, 1.0, 0.0]);
        for _ in 0..40 {
            s = step_dynamics(&model, &s, &[], &ExternalWrench::none(), &NoGround, STANDARD_GRAVITY, dt)
                .unwrap()
                .state;
        }
        let dz = s.q[1] - 1.0;
        // semi-implicit Euler: -g dt² N(N+1)/2
        let discrete = -9.81 * dt * dt * 40.0 * 41.0 / 2.0;
        assert!((dz - discrete).abs() < 1e-12, "{dz} vs {discrete}");
        assert!((dz - (-0.04905)).abs() < 1.5e-3);
    }

    #[test]
    fn small_angle_pendulum_period() {
        let (l, g) = (0.5, 9.81);
        let model = pendulum(BaseKind::Fixed { x: 0.0, z: 0.0, pitch: 0.0 }, 1.0, l, 1e-9);
        let dt = 2.5e-4;
        let mut s = GeneralizedState::at_rest(vec![0.02]);
        let mut crossings = Vec::new();
        let mut prev = s.q[0];
        while s.time < 10.0 {
            s = step_dynamics(&model, &s, &[0.0], &ExternalWrench::none(), &NoGround, -g, dt)
                .unwrap()
                .state;
            if prev > 0.0 && s.q[0] <= 0.0 {
                // linear interpolation of the downward zero crossing
                crossings.push(s.time - dt * s.q[0] / (s.q[0] - prev));
            }
            prev = s.q[0];
        }
        let period = (crossings.last().unwrap() - crossings[0]) / (crossings.len() - 1) as f64;
        let expected = 2.0 * PI * (l / g).sqrt();
        assert!(((period - expected) / expected).abs() < 0.01, "{period} vs {expected}");
    }

    #[test]
    fn standing_on_ground_settles() {
        let params = ModelParams::default();
        let model = build_model(&params).unwrap();
        let mut q = vec![0.0, params.nominal_standing_height(), 0.0];
        q.extend(model.nominal_joint_positions());
        let mut s = GeneralizedState::at_rest(q);
        let nominal = model.nominal_joint_positions();
        for _ in 0..800 {
            let tau: Vec<f64> = (0..4)
                .map(|j| (80.0 * (nominal[j] - s.q[3 + j]) - 2.0 * s.u[3 + j]).clamp(-12.0, 12.0))
                .collect();
            let out = step_dynamics(&model, &s, &tau, &ExternalWrench::none(), &FlatGround::default(), STANDARD_GRAVITY, 0.0025)
                .unwrap();
            for f in &out.contact.feet {
                assert!(f.normal >= 0.0);
                assert!(f.tangential.abs() <= 0.5 * f.normal + 1e-12);
            }
            s = out.state;
        }
        let h = params.nominal_standing_height();
        assert!((s.q[1] - h).abs() < 0.2 * h, "height {}", s.q[1]);
        assert!(s.q[2].abs() < 0.1);
        assert!(s.u.iter().all(|v| v.abs() < 0.05), "{:?}", s.u);
    }

    #[test]
    fn rejects_bad_timestep_and_nan() {
        let model = base_only(1.0, 1.0);
        let s = GeneralizedState::at_rest(vec![0.0; 3]);
        assert!(matches!(
            step_dynamics(&model, &s, &[], &ExternalWrench::none(), &NoGround, 0.0, 0.0),
            Err(DynamicsError::InvalidTimestep(_))
        ));
        let bad = GeneralizedState {
            q: vec![f64::NAN, 0.0, 0.0],
            ..s
        };
        assert!(matches!(
            step_dynamics(&model, &bad, &[], &ExternalWrench::none(), &NoGround, 0.0, 0.01),
            Err(DynamicsError::NonFinite { .. })
        ));
    }

    #[test]
    fn joint_stop_zeroes_velocity() {
        let model = pendulum(BaseKind::Fixed { x: 0.0, z: 0.0, pitch: 0.0 }, 1.0, 0.5, 0.01);
        let s = GeneralizedState {
            q: vec![9.99],
            u: vec![5.0],
            time: 0.0,
        };
        let out = step_dynamics(&model, &s, &[0.0], &ExternalWrench::none(), &NoGround, 0.0, 0.01).unwrap();
        assert_eq!(out.state.q[0], 10.0);
        assert_eq!(out.state.u[0], 0.0);
    }

    #[test]
    fn pure_base_velocity_energy() {
        let model = build_model(&ModelParams::default()).unwrap();
        let mut q = vec![0.0; 7];
        q[1] = 0.0;
        let s = GeneralizedState {
            q: q.clone(),
            u: vec![1.5, -0.5, 0.0, 0.0, 0.0, 0.0, 0.0],
            time: 0.0,
        };
        let v2 = 1.5f64 * 1.5 + 0.5 * 0.5;
        assert!((kinetic_energy(&model, &s) - 0.5 * 14.0 * v2).abs() < 1e-12);
        let base = base_only(2.0, 0.1);
        let rest = GeneralizedState::at_rest(vec![0.0, 0.0, 0.3]);
        assert_eq!(total_energy(&base, &rest, STANDARD_GRAVITY), 0.0);
    }
}
