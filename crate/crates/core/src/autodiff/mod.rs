//! Minimal reverse-mode automatic differentiation over dense tensors.

mod conv;
pub mod gradcheck;
mod ops;
mod params;
mod tape;
mod tensor;

pub use conv::{out_extent, ConvGeometry};
pub use gradcheck::{grad_check, grad_check_params, max_relative_error, numeric_gradient};
pub use ops::{log_softmax_in_place, BatchNormState};
pub use params::{ParamId, ParamStore, Parameter};
pub use tape::{Activation, Gradients, Tape, Var};
pub use tensor::{Real, Tensor};

#[cfg(test)]
mod tests;
