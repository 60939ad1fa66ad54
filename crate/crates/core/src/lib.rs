#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod fock;
pub mod gaussian;
pub mod measurement;
pub mod outcome;
pub mod sampling;

pub use error::{Error, Result};
