// `!(x > 0.0)` is used deliberately so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod gradients;
pub mod inference;
pub mod model;
pub mod oracle;
pub mod training;

pub use error::{Error, Result};
