//! Graph attention with a selective state-space block.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor`], [`kernels`] and [`tape`]: dense tensors and reverse-mode autodiff
//! - [`graph`]: CSR graphs, the on-disk bundle format, splits and validation
//! - [`model`]: attention layer, state-space block, the stacked network and checkpoints
//! - [`train`]: losses, Adam, early stopping, metrics and the training loops

pub mod config;
pub mod error;
pub mod graph;
pub mod kernels;
pub mod model;
pub mod tape;
pub mod tensor;
pub mod train;

pub use config::{RunConfig, TrainConfig};
pub use error::{GsanError, Result};
pub use tape::{Gradients, Tape, Unary, Var};
pub use tensor::{Real, Tensor};
