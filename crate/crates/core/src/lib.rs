//! Optimal placement of virtual inertia in Kron-reduced power networks under
//! an H2 coherency metric.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`] builds the network, eliminates passive buses and assembles the
//!   linear swing model for an inertia allocation;
//! * [`lyapunov`] and [`h2`] evaluate the squared H2 norm through a
//!   constrained Lyapunov equation, its bounds and its analytic gradient;
//! * [`allocator`] solves the allocation problem in its general, closed-form,
//!   sparse and robust variants;
//! * [`simulator`] replays impulse responses and provides a time-domain
//!   H2 estimate;
//! * [`scenario`], [`report`] and [`run`] handle the JSON scenario format,
//!   result files and the `inertia-opt` command surface.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocator;
pub mod error;
pub mod grid;
pub mod h2;
pub mod lyapunov;
mod par;
pub mod report;
pub mod run;
pub mod scenario;
pub mod simulator;

pub use error::{Error, Result};
