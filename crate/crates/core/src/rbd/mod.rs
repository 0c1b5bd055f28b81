//! Floating-base planar rigid-body dynamics: model description, kinematics,
//! penalty contact and time stepping.

mod contact;
mod dynamics;
pub mod kinematics;
mod model;

use thiserror::Error;

pub use contact::{contact_forces, ContactState, FlatGround, FootContact, NoGround, Terrain};
pub use dynamics::{
    bias_forces, kinetic_energy, mass_matrix, momentum, step_dynamics, total_energy,
    ExternalWrench, GeneralizedState, StepOutput, STANDARD_GRAVITY,
};
pub use kinematics::{contact_jacobian, forward_kinematics, Kinematics};
pub use model::{
    build_model, BaseKind, Body, ContactParams, Foot, Joint, ModelParams, Parent, RobotModel,
};

pub type Vec2 = nalgebra::Vector2<f64>;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("`{field}` must be positive and finite, got {value}")]
    NonPositive { field: String, value: f64 },
    #[error("`{field}` out of range: {value}")]
    OutOfRange { field: String, value: f64 },
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("unknown model parameter `{0}`")]
    UnknownKey(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum DynamicsError {
    #[error("mass matrix is singular at t = {time} s")]
    SingularMassMatrix { time: f64 },
    #[error("non-finite state at t = {time} s: {what}")]
    NonFinite { time: f64, what: String },
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimestep(f64),
    #[error("dimension mismatch: model has {expected} DoFs, got q {q}, u {u}, tau {tau}")]
    Dimension {
        expected: usize,
        q: usize,
        u: usize,
        tau: usize,
    },
}
