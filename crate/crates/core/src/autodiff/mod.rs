//! Reverse-mode differentiable tensors and the ops the vocoders need.

pub mod checkpoint;
pub mod conv;
pub mod ops;
pub mod optim;
pub mod prob;
pub mod spectral;
mod tensor;

pub use tensor::{inject_gradient_fault, Real, Tensor};
