//! Fitting compute scaling laws and shifted power-law links between losses.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accmap;
pub mod cli;
pub mod error;
pub mod lawfit;
pub mod linmodel;
pub mod losslink;
pub mod optim;
pub mod records;
pub mod synth;
pub mod workflows;
pub use error::{Error, Result};
