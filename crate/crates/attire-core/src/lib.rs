//! Core engine for outfit complementary item retrieval.
//!
//! The crate implements the full algorithmic stack with no IO:
//!
//! - [`model`]: category-conditioned subspace embeddings. A feature vector is
//!   gated by `k` learned masks and the gated copies are mixed by attention
//!   weights predicted from the (source, target) category pair.
//! - [`loss`]: pairwise and outfit-level distances, the outfit ranking hinge
//!   loss, and the plain triplet-loss baseline.
//! - [`grad`]: hand-derived backpropagation for the ranking loss, plus a
//!   finite-difference checker that only exercises the forward path.
//! - [`optim`]: Adam / SGD with a linear decay schedule.
//! - [`data`]: in-memory datasets, a planted-structure synthetic generator,
//!   and triple sampling.
//! - [`mining`]: semi-hard and random negative selection.
//! - [`trainer`]: the batched training loop with per-batch embedding reuse.
//! - [`index`]: category-enumerated embedding index with exact and
//!   small-world-graph approximate KNN.
//! - [`retrieval`]: query-time embedding, per-item KNN and average fusion,
//!   fill-in-the-blank answering, and outfit compatibility scoring.
//! - [`eval`]: AUC, FITB accuracy, recall@k, and benchmark construction.
//!
//! Everything is deterministic: a fixed seed reproduces every loss, metric
//! and ranking bit for bit in a single-threaded run. The crate is `no_std`
//! (with `alloc`); file formats and the CLI live in the companion `attire`
//! crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod checksum;
pub mod data;
pub mod error;
pub mod eval;
pub mod grad;
pub mod index;
pub mod loss;
pub mod mining;
pub mod model;
pub mod optim;
pub mod retrieval;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use model::{CategoryId, Item, ItemId, ModelConfig, ModelParams};
