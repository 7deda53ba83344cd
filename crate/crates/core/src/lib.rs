// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brdf;
pub mod cli;
pub mod envmap;
pub mod error;
pub mod fixture;
pub mod image;
pub mod io;
pub mod math;
pub mod optim;
pub mod shading;
pub mod splat;
pub mod validate;

pub use error::{Error, Result};
