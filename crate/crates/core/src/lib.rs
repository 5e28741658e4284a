#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod calibrate;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod mixture;
pub mod model;
pub mod quantile;
pub mod rng;
pub mod root;
pub mod sampling;
pub mod sim;
pub mod special;
pub mod spline;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use sampling::Interval;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
