//! Dense n-dimensional numeric substrate for the video-SCI toolkit.
//!
//! Provides the tensor type and the small set of operations the
//! reconstruction network is built from (3D convolution and its transpose,
//! activations, softmax, linear projections, layer normalization), each with
//! an analytic backward pass, a tape for composing them, and a
//! finite-difference gradient checker that verifies every backward pass.
//!
//! All kernels are pure and single-threaded: the same inputs produce
//! bitwise-identical outputs.

mod dtype;
mod error;
mod tensor;

pub mod check;
pub mod ops;
pub mod stns;
pub mod tape;

pub use dtype::{Dtype, Scalar};
pub use error::{Result, TensorError};
pub use ops::ConvSpec;
pub use tensor::{inverse_axes, strides_of, Tensor};
