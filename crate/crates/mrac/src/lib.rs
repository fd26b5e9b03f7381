//! Discrete-time model-reference adaptive control with interchangeable
//! adaptive laws.
//!
//! The crate simulates the closed loop around a states-accessible plant with
//! unknown linear dynamics and unknown coefficients on known Lipschitz
//! nonlinearities. A certainty-equivalence controller drives the plant
//! toward a Schur-stable reference model while one of two adaptive laws
//! updates the parameter estimate from the causally measurable prediction
//! error:
//!
//! * normalized gradient descent, and
//! * the high-order tuner, a momentum law that reduces to Nesterov's
//!   algorithm under constant regressors.
//!
//! Both laws carry per-step Lyapunov certificates that the simulation can
//! monitor at runtime, and the admissible high-order tuner gain region can be
//! scanned and exported for plotting. A Monte Carlo harness perturbs the
//! nominal LQR gain and aggregates tracking-error percentile bands across
//! deterministic, seeded trials.

// Negated float comparisons like `!(mu > 0.0)` are deliberate: unlike
// `mu <= 0.0`, they also reject NaN arguments.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod csv_out;
pub mod error;
pub mod error_model;
pub mod gain_region;
pub mod laws;
pub mod lti;
pub mod lyapunov;
pub mod plant;
pub mod sim;

pub use error::{Error, Result};
