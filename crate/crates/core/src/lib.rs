//! Task-specific selective masking pipeline for MLM pre-training data.
//!
//! The pipeline scores each corpus word's task relevance from two seed word
//! classes and pre-trained embeddings, converts scores into masking
//! probabilities through a calibrated masking function, and emits
//! whole-word-masked training examples with standard 80/10/10 corruption.
//! Random token-level and whole-word baselines share the same machinery.

pub mod config;
pub mod embeddings;
pub mod error;
pub mod fixtures;
pub mod job;
pub mod lexicon;
pub mod maskfn;
pub mod normalize;
pub mod pipeline;
pub mod rng;
pub mod scorer;
pub mod stats;
pub mod tokenizer;

pub use error::{Error, Result};
