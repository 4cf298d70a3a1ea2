//! Wannier-Stark lattice simulator for one-dimensional Dirac dynamics.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod couplings;
pub mod discrete;
pub mod error;
pub mod exact;
pub mod observables;
pub mod ws;

pub use error::{Error, Result};
