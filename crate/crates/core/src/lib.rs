// NaN must fail `!(x > 0.0)` style checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod data_io;
pub mod dist;
pub mod error;
pub mod mcmc;
pub mod model;
pub mod optim;
pub mod risk;
pub mod sim;

pub use error::{Error, Result};
