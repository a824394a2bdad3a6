//! Dense tensors with a dynamic reverse-mode autodiff tape.
//!
//! Models are generic over [`Scalar`] so the same forward code trains at
//! 32-bit and is verified by [`grad_check`] at 64-bit.

mod error;
mod gradcheck;
mod kernels;
mod scalar;
mod tape;
mod tensor;

pub use error::TensorError;
pub use gradcheck::{grad_check, grad_check_at, relative_error, GradCheckReport};
pub use scalar::{Precision, Scalar};
pub use tape::{BackwardFn, Gradients, Tape, Var, LOG_FLOOR};
pub use tensor::Tensor;
