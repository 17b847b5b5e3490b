// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// index loops mirror the math in the numeric kernels
#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
mod fsutil;
pub mod losses;
pub mod metrics;
pub mod network;
pub mod stats;
pub mod tensor;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
