//! Convolutional sentence classification for short-text sentiment analysis.
//!
//! The pipeline is the classic single-layer text CNN: each document is turned
//! into a matrix of word vectors, a bank of filters slides over it, every
//! feature map is max-pooled to one value, and a softmax head classifies the
//! pooled vector into 2 or 5 sentiment levels.
//!
//! Modules, bottom-up:
//!
//! * [`preprocess`] - social-media text normalization and tokenization.
//! * [`embeddings`] - pretrained word vector loading and lookup.
//! * [`data`] - labeled corpora, label schemas, stratified splitting.
//! * [`nn`] - forward-pass numerics.
//! * [`training`] - backpropagation, Adadelta, the early-stopped training loop
//!   and checkpoints.
//! * [`eval`] - ROC-AUC scoring and the grid-search harness.

pub mod data;
pub mod embeddings;
mod error;
pub mod eval;
pub mod nn;
pub mod preprocess;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
