//! Planar quadruped locomotion laboratory: rigid-body simulation, impedance
//! actuation with random torque injection, PPO training and robustness
//! sweeps.

pub mod actuation;
pub mod env;
pub mod harness;
pub mod rbd;
pub mod rng;
pub mod par;
pub mod policy;
