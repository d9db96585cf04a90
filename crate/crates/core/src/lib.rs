//! Explicit concentration constants for bounded-difference functionals of
//! geometrically ergodic finite-state Markov chains, with exact and Monte
//! Carlo certification of the resulting tail bound.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bound;
pub mod diagnostics;
pub mod ergodicity;
pub mod error;
pub mod functionals;
pub mod hitting;
pub mod kernel;
mod linalg;
pub mod montecarlo;
pub mod exact;
pub mod pipeline;
pub mod report;
pub mod spec;
pub mod zoo;

pub use error::{Error, Result};
