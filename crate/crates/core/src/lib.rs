//! Object-centric scene decomposition with simplified slot attention and
//! max-pool priors.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`], [`tape`], [`param`], [`gradcheck`]: a small dense tensor
//!   engine with reverse-mode autodiff and a finite-difference oracle.
//! - [`model`]: the convolutional encoder, the conv/max-pool competition
//!   encoder producing primitive slots, the single-pass slot attention layer,
//!   and the spatial broadcast decoder with mask mixing.
//! - [`baseline`]: iterative Slot Attention and the attention ablation
//!   variants, plus a grouping-module benchmark.
//! - [`data`]: deterministic synthetic multi-object datasets and their
//!   on-disk format.
//! - [`metrics`]: ARI and foreground ARI.
//! - [`train`]: Adam, learning-rate schedule, checkpoints, training and
//!   evaluation.
//! - [`viz`], [`ablate`]: figure-style image grids and ablation sweeps.

pub mod ablate;
pub mod baseline;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod param;
pub mod real;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod util;
pub mod viz;

pub use error::{Result, SampError};
pub use param::{ParamId, ParamStore, Parameter};
pub use real::Real;
pub use tape::{Gradients, OpKind, Tape, Var};
pub use tensor::Tensor;
