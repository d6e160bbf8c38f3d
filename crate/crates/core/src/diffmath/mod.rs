//! Differentiation substrate: tensors, the reverse-mode tape, and the
//! finite-difference gradient oracle.

pub mod check;
pub mod tape;
pub mod tensor;

pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
