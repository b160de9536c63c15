//! Two-stage search planning for a camera-equipped agent around 3D structures.
//!
//! Stage one ([`assessment`]) solves a mixed-integer linear program that
//! steers the agent past one waypoint per object of interest. Stage two
//! ([`search`]) runs a rolling-horizon mixed-integer MPC that flies the agent
//! through coverage cuboids generated around every face that needs to be
//! imaged, while keeping it out of obstacle polyhedra. Both stages are solved
//! by the branch-and-bound solver in [`mip`]; [`harness`] closes the loop and
//! audits the executed trajectory.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assessment;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod mip;
pub mod scenario;
pub mod search;

pub use error::{Error, Result};

/// Plain 3-vector used for positions, velocities, forces and normals.
pub type Vec3 = nalgebra::Vector3<f64>;
