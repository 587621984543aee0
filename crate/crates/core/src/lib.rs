//! Simulation and verification toolkit for Brown-Resnick max-stable fields.

// `!(x > 0.0)` rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod error;
pub mod exec;
pub mod gauss;
pub mod limit;
pub mod m3;
pub mod ppp;
pub mod report;
pub mod rng;
pub mod simulate;
pub mod stationarity;
pub mod variogram;
pub mod verify;

pub use error::{Error, Result};
