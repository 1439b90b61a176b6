//! Simulation and control library for a four-thruster vectored AUV.
//!
//! * [`model`]: 6-DOF dynamics, kinematics, RK4 plant and the controller's
//!   discrete models.
//! * [`allocation`]: thruster wrench map, closed-form allocators and the
//!   reachable-envelope analysis.
//! * [`mpc`]: incremental MPC with a terminal equality, solved by KKT.
//! * [`adaptive`]: feedforward input matrix and the gated adaptive law.
//! * [`controllers`]: the cascaded feedforward adaptive MPC plus MPC and PID
//!   baselines.
//! * [`harness`]: scenarios, closed-loop runs, logs and metrics.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod allocation;
pub mod controllers;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod model;
pub mod mpc;

pub use error::{Error, Result};
pub use model::{BodyVelocity, Dof, DofSelector, ModelParams, Pose, VehicleState, Wrench};
