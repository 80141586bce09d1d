// `!(a > b)` comparisons are deliberate: they reject NaN along with the bound.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub use error::{Error, Result};

pub mod baseline;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod integrators;
pub mod linalg;
pub mod monitors;
pub mod problem;
pub mod steppers;
