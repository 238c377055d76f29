//! Dense tensors with a reverse-mode differentiation tape.

mod gradcheck;
mod params;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use params::{ParamSet, CHECKPOINT_MAGIC};
pub use tape::{Precision, Tape, Var};
pub use tensor::Tensor;
