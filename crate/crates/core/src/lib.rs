// NaN-rejecting checks are written as `!(x > 0.0)` on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod analytic;
pub mod cli;
pub mod error;
pub mod harness;
pub mod io;
pub mod model;
pub mod rng;
pub mod sde;
pub mod spectral;

pub use error::{Error, Result};
pub use model::{ExperimentParams, Spectrum, Trajectory};
