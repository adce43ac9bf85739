//! Paracontrolled pseudo-spectral solver for the stochastic cubic complex
//! Ginzburg–Landau equation on the three-dimensional torus.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod besov;
pub mod config;
pub mod drivers;
pub mod error;
pub mod grid;
pub mod io;
pub mod noise;
pub mod paraproduct;
pub mod renorm;
pub mod solver;

pub use error::{Error, Result};
