//! Embodied visuomotor representation.
//!
//! Scale-free visual observations (`Φ`, the ratio of a position to an unknown
//! scene size `d`) are combined with the robot's own control inputs to
//! estimate distances, velocities, gravity and actuator dynamics in
//! *embodied* units: the distance over which one unit of input produces one
//! unit of acceleration. The crate bundles the estimators, the controllers
//! that consume them, a simulator that stands in for the robot, and a
//! harness that runs the touching, clearing and jumping experiments.

// `!(x > 0.0)` rejects NaN as well; index loops mirror the matrix algebra.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod camera;
pub mod control;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod plant;
pub mod signals;
