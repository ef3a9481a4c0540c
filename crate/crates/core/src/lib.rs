// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod constants;
pub mod determinant;
pub mod dynkin;
pub mod error;
pub mod extremal;
pub mod harness;
pub mod model;
pub mod quad;
pub mod zeros;

pub use constants::ConstantsConfig;
pub use error::{Error, Result};

#[cfg(test)]
mod tests;
