//! Spectral analysis of sample autocovariance matrices built from
//! high-dimensional linear processes driven by heavy-tailed noise.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approximation;
pub mod autocovariance;
pub mod error;
pub mod filter_spectrum;
pub mod io;
pub mod limits;
pub mod linear_process;
pub mod lsd;
pub mod noise;

pub use error::{Error, Result};
