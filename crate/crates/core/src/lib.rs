//! Planar bevel-tip needle insertion mechanics and resolved-rate shape
//! manipulation.
//!
//! The crate is `no_std` (with `alloc`) and holds every numerical piece of
//! the simulator:
//!
//! - [`tissue`]: layered strain-hardening tissue foundation.
//! - [`fem`]: Hermite-cubic Euler-Bernoulli beam solved with Newton-Raphson.
//! - [`sim`]: the time-stepped insertion plant (`y = f(x)`).
//! - [`control`]: resolved-rate control with Broyden or finite-difference
//!   Jacobians.
//! - [`experiments`]: biopsy targets, path generation, study cells and
//!   effort metrics.
//!
//! File formats, configuration and the command line live in the
//! `needle-steer` companion crate.

#![cfg_attr(not(test), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

pub mod control;
pub mod error;
pub mod experiments;
pub mod fem;
pub mod linalg;
pub mod sim;
pub mod tissue;

pub use error::{Error, Result};
pub use linalg::{Mat3, Vec3};
