//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.

mod gradcheck;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, numeric_gradient};
pub use optim::{ParamRef, SgdMomentum};
pub use tape::{Gradients, Mask, Tape, Var, NORM_EPS};
pub use tensor::Tensor;
