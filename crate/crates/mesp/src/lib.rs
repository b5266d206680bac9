//! Desk-scale building blocks for a convolutional multi-in-multi-out
//! spatiotemporal sequence predictor: a dense f32 tensor type, a tape-based
//! reverse-mode autodiff engine, the network's forward pass, AdamW training
//! with a combined L1+L2 objective, flexible-horizon autoregressive
//! inference, forecast metrics, synthetic data generation, and binary
//! serialization for tensors, checkpoints, and datasets.
//!
//! Everything is deterministic: a fixed seed fixes initialization, data,
//! batching, and therefore the trained parameters, bit for bit, regardless
//! of thread count.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod metrics;
pub mod model;
pub mod ops;
pub mod parallel;
pub mod rng;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tape::{GradTape, Gradients, Var};
pub use tensor::Tensor;

#[cfg(test)]
pub(crate) mod test_util;
