//! Differentiable neural-network operations: convolution, sub-pixel
//! rearrangement, channel layer norm, and GELU. Each module provides the
//! plain tensor function(s), the backward rules, and a [`GradTape`] method
//! that records the op.
//!
//! [`GradTape`]: crate::tape::GradTape

pub mod act;
pub mod conv;
pub mod norm;
pub mod shuffle;

pub use act::{gelu, gelu_derivative};
pub use conv::{conv2d, conv2d_grad_bias, conv2d_grad_input, conv2d_grad_weight, Conv2dSpec};
pub use norm::{layer_norm, LAYER_NORM_EPS};
pub use shuffle::{pixel_shuffle, pixel_unshuffle};
