//! CloFormer: a lightweight vision transformer with context-aware local
//! attention, implemented from first principles on a small NCHW tensor and
//! reverse-mode autodiff core.
//!
//! Layering, bottom up:
//! - [`tensor`] / [`tape`]: dense tensors, CLOT serialization, autodiff.
//! - [`ops`]: differentiable layer primitives (conv, FC, pooling, norm,
//!   softmax, attention, drop-path).
//! - [`attnconv`]: the AttnConv local branch and its ablation variants.
//! - [`block`]: the Clo block (local + pooled-global mixer) and ConvFFN.
//! - [`model`]: variant specs (XXS/XS/S), model construction and forward.
//! - [`accounting`]: exact parameter and FLOP counts.
//! - [`analysis`]: DFT-based frequency-band analysis of branch outputs.
//! - [`config`], [`data`], [`loss`], [`optim`], [`checkpoint`], [`train`]:
//!   the training harness.

pub mod error;
pub mod tensor;
pub mod tape;
pub mod ops;
pub mod param;
pub mod attnconv;
pub mod block;
pub mod model;
pub mod accounting;
pub mod analysis;
pub mod config;
pub mod data;
pub mod loss;
pub mod optim;
pub mod checkpoint;
pub mod train;
pub mod gradcheck;

pub use error::{Error, Result};
pub use tensor::{Dtype, Elem, Tensor};
