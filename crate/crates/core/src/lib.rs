//! Core library for `tgq`: a desk-scale multimodal item-embedding pipeline.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! - [`tensor`] — dense f64 tensors with reverse-mode gradients (the substrate
//!   every trainable stage runs on), plus the `TGQT` blob format.
//! - [`corpus`] — planted-structure synthetic corpora and pair construction.
//! - [`encoders`] — frozen synthetic/ingest encoders producing visual and text
//!   tokens with global pooled vectors.
//! - [`hqc`] — the hybrid-query connector (metadata-anchored + exploratory
//!   query streams over frozen visual tokens).
//! - [`gating`] — dual-gated channel-wise stream modulation.
//! - [`regularizer`] — redundancy-reduction loss between stream summaries.
//! - [`fusion`] — prompt assembly, the trainable fusion backbone, item
//!   embeddings, and the contrastive objective.
//! - [`train`] — AdamW, LR schedule, the training loop, checkpoints.
//! - [`retrieval`] — full-pool cosine ranking and hit-rate reports.
//! - [`image`] / [`noise`] — PPM images, overlay rendering, and the
//!   severity-laddered corruption toolkit (pixel and token forms).

pub mod config;
pub mod corpus;
pub mod encoders;
pub mod error;
pub mod fusion;
pub mod gating;
pub mod gradcheck;
pub mod hqc;
pub mod image;
pub mod model;
pub mod nn;
pub mod noise;
pub mod regularizer;
pub mod retrieval;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod util;

pub use error::{Error, Result};
pub use tensor::{Graph, Tensor, Var};
