//! Minimal dense tensor engine for small convolutional networks.
//!
//! Tensors are NCHW, row-major with width fastest. Networks are written once
//! against the [`Ops`] trait and run either eagerly through [`Eval`] or
//! recorded on a [`Tape`] for reverse-mode differentiation. The tape is
//! rebuilt for every forward pass.

pub mod conv;
mod error;
pub mod gradcheck;
mod graph;
pub mod ops;
mod scalar;
mod tape;
mod tensor;

pub use conv::ConvSpec;
pub use error::{Result, TensorError};
pub use graph::{partial_conv_mask, Eval, Ops};
pub use ops::Activation;
pub use scalar::Element;
pub use tape::{Gradients, Tape, Var};
pub use tensor::{Dims, Tensor};

/// Worker threads available to the parallel kernels.
pub fn thread_count() -> usize {
    rayon::current_num_threads()
}
