//! Simulation-based bias correction for parametric models.
//!
//! The crate provides the building blocks for computing bias corrected
//! estimators from a simulator and an initial (possibly inconsistent)
//! estimator:
//!
//! * [`crn`] — deterministic random-number infrastructure: splittable
//!   seeded streams, the fixed uniform bank shared by every iteration of
//!   the solver, and inverse-CDF samplers for the supported response
//!   distributions.
//! * [`models`] — model definitions with simulators: logistic regression
//!   (plain and with misclassified responses), Poisson and negative
//!   binomial regression (plain and right-censored), design generators,
//!   and a synthetic linear-bias pseudo-model used for exactness tests.
//! * [`estimators`] — maximum-likelihood fitters used as initial and
//!   benchmark estimators.
//! * [`bias_correct`] — the one-step bootstrap bias correction and the
//!   iterative-bootstrap fixed-point solver, with full trace capture.
//!
//! The crate is `no_std` (with `alloc`); everything that touches the file
//! system, the clock, or a thread pool lives in the companion `jini` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod bias_correct;
pub mod crn;
pub mod estimators;
pub mod models;

mod error;
mod linalg;
mod math;

pub use error::{Error, Result};
