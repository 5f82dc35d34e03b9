//! Camera calibration laboratory.
//!
//! Calibrates pinhole intrinsics from planar checkerboard views with two
//! linear methods (principal-line intersection and the conic-based algebraic
//! method), simulates checkerboard datasets whose principal point drifts with
//! focal setting and camera pose, and measures that drift through trajectory
//! statistics and cross-pose reprojection error.

// `!(x > 0.0)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod principal_line;
pub mod rotation;
pub mod synth;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
