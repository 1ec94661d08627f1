//! Building blocks for turning timed video transcripts into pretraining
//! examples, the numeric kernels of the three pretraining objectives, and the
//! zero-shot story-unscrambling evaluation.
//!
//! The neural networks themselves are not part of this crate: embeddings,
//! attention weights, perplexities and relation probabilities are consumed
//! as inputs.

pub mod align;
pub mod corpus;
pub mod denoise;
pub mod filter;
pub mod mask;
pub mod objectives;
pub mod pipeline;
pub mod reorder;
pub mod seed;
pub mod segment;
pub mod selfcheck;
pub mod tensor_io;
pub mod tokenizer;

pub use corpus::{PackedExample, Segment, TimedToken, TimedWord, Variant, VideoRecord};

/// Version stamped into every line-delimited record this crate writes.
pub const SCHEMA_VERSION: u32 = 1;
