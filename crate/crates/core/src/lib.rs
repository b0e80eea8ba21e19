//! Temporal-diagonal latent optimization for video diffusion transformers,
//! at toy scale: a small autograd engine, a video DiT with full 3D
//! attention, DDPM and flow-matching samplers, the temporal-attention
//! regularizer with its refinement loop, synthetic data and metrics.

pub mod data;
pub mod diffusion;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod parallel;
pub mod tedio;
pub mod tensor;

pub use error::{Error, ErrorKind, Result};
pub use tensor::{Element, Gradients, Tape, Tensor};
