//! Physics-guided hierarchical-reward grasp learning.
//!
//! The crate is organized bottom-up:
//! * [`grasp_math`]: grasp matrix, graspability and ellipsoid-volume quality;
//! * [`nnls`]: small dense nonnegative least squares used by the hold check;
//! * [`env`]: quasi-static arm + three-finger gripper grasping environment;
//! * [`reward`]: hierarchical, task-only and linear-summed reward modes;
//! * [`neural`]: dense network kernel with backpropagation and Adam;
//! * [`td3`]: twin delayed deterministic policy gradient learner;
//! * [`stats`]: N-1 chi-square and one-way ANOVA with LSD comparisons;
//! * [`harness`]: run configuration, training/evaluation orchestration and reports.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod env;
pub mod error;
pub mod grasp_math;
pub mod harness;
pub mod neural;
pub mod nnls;
pub mod reward;
pub mod stats;
pub mod task;
pub mod td3;

pub use error::{Error, Result};
