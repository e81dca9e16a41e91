#![no_std]
// `!(x > 0.0)` deliberately rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod control;
pub mod entropy;
pub mod error;
pub mod fokker_planck;
pub mod gaussian;
pub mod grid;
pub mod jarzynski;
pub mod linalg;
pub mod math;
pub mod model;
pub mod quadrature;
pub mod reversal;
pub mod sde;
pub mod stats;

pub use error::{Error, Result};
