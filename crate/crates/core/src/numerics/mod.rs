//! Dense `f64` tensors and a reverse-mode tape over the ops the model uses.

pub mod kernels;
mod tape;
mod tensor;

pub use tape::{sigmoid, Tape, Var};
pub use tensor::Tensor;
