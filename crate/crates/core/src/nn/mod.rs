//! Tape-based reverse-mode differentiation over `f64` tensors.
//!
//! Operations are coarse (a whole GRU sweep, a whole convolution) so the
//! tape stays short. Parameters live in a [`ParamStore`]; a [`Graph`] is
//! built per forward pass and discarded after the backward pass.

mod adam;
mod conv;
pub mod gradcheck;
mod graph;
mod gru;
mod kernels;
pub mod layers;
mod norm;
mod ops;
mod params;
mod tensor;

pub use adam::{Adam, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use graph::{Gradients, Graph, Var};
pub use norm::BN_EPS;
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// Whether layers use batch statistics and dropout (`Train`) or running
/// statistics and identity dropout (`Eval`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
