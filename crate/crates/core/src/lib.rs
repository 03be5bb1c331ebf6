//! Frequency-multiplexed ghost imaging: measurement model, simulation and
//! reconstruction by measurement reduction.

// `!(x > 0.0)` is how NaN gets rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod io;
pub mod linalg;
pub mod optics;
pub mod reduction;
pub mod sensing;
pub mod sim;
pub mod transforms;

pub use error::{Error, Result};
