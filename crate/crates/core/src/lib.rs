//! Material Point Method dynamics weakly coupled to rigid bodies through a
//! strongly convex frictional contact problem.
//!
//! One coupling step of size `dt` runs `N` explicit MLS-MPM substeps. Each
//! substep computes the free-motion grid velocity, registers one contact per
//! particle/geometry pair, and solves a convex program for the post-contact
//! grid velocity with a block-diagonal quasi-Newton method. Contact impulses
//! are accumulated and applied to the rigid bodies once per step.
//!
//! Module map:
//! - [`mpm`]: particles, sparse grid, constitutive model, P2G / grid update / G2P.
//! - [`transfer`]: sort plans and binned scatter reduction.
//! - [`geometry`] and [`contact`]: signed distances, contact registration, the
//!   lagged contact potential.
//! - [`solver`]: the quasi-Newton contact solver and the dense Newton oracle.
//! - [`rigid`] and [`scheduler`]: rigid bodies and the time-splitting driver.
//! - [`scene`]: configuration, outputs, statistics and canned experiments.

pub mod contact;
pub mod error;
pub mod geometry;
pub mod math;
pub mod mpm;
pub mod rigid;
pub mod scene;
pub mod scheduler;
pub mod solver;
pub mod transfer;

pub use error::{Error, Result};

pub type Real = f64;
pub type Vec3 = nalgebra::Vector3<Real>;
pub type Mat3 = nalgebra::Matrix3<Real>;
pub type Quat = nalgebra::UnitQuaternion<Real>;
