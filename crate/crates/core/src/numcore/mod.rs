//! Dense tensors, reverse-mode differentiation, Adam, and gradient checking.

mod adam;
mod gradcheck;
pub mod kernels;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{gradcheck, relative_error, Differentiable, GradcheckReport, TapeFn, REL_ERR_FLOOR};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
