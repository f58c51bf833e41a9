//! Simulation and detection toolkit for covert attacks on power-grid state
//! estimation.
//!
//! The crate is organised around the data flow of an online monitor:
//!
//! - [`netmodel`]: network cases, sensor plans and the AC measurement function.
//! - [`simlinear`] / [`simgrid`]: the randomized linear testbed and the
//!   nonlinear 14-bus testbed.
//! - [`attack`]: covert attacks that move a generator's state and replay
//!   normal readings on the sensors around it.
//! - [`estimator`]: weighted least squares and Gauss-Newton state estimation.
//! - [`sgl`]: the sparse group lasso solver.
//! - [`detector`]: grouped residual bases, the alternating estimate/explain
//!   loop, calibration and monitoring.
//! - [`baselines`]: the chi-square bad-data detector and the leave-group-out
//!   hypothesis-testing localizer.

pub mod attack;
pub mod baselines;
pub mod detector;
pub mod error;
pub mod estimator;
pub mod linalg;
pub mod netmodel;
pub mod rng;
pub mod sgl;
pub mod simgrid;
pub mod simlinear;

pub use error::{Error, Result};
