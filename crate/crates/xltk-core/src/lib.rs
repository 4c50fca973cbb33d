//! Toxic-comment classifier built from scratch: a small reverse-mode autodiff
//! tape, a multi-source embedding front end with cosine-similarity feature
//! gating, a stacked BiLSTM + self-attention encoder, imbalance machinery
//! (class-weighted focal loss, embedding-space minority oversampling), a
//! seeded training loop, and an evaluation/metrics suite.

pub mod data;
pub mod embed;
pub mod gate;
pub mod metrics;
pub mod model;
pub mod gradcheck;
pub mod imbalance;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod train;

pub use tensor::{Tape, Tensor, TensorError, TensorId};
