//! Call-intent text classification engine.
//!
//! The pipeline runs from raw caller transcripts to a trained convolutional
//! classifier:
//!
//! - [`corpus`]: JSON-lines datasets, tokenization, vocabulary, fixed-length encoding
//! - [`bow`]: binary and augmented TF-IDF bag-of-N-grams vectors
//! - [`embeddings`]: co-occurrence counts, GloVe and skip-gram training, vector files
//! - [`convnet`]: multi-width convolution + max-pool + softmax classifier with RMSProp
//! - [`eval`]: confusion matrix and per-class / macro precision, recall, F1
//! - [`container`]: binary model persistence
//! - [`synth`]: seeded synthetic four-intent transcript generator

pub mod bow;
pub mod container;
pub mod convnet;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod synth;

pub use error::{Error, Result};
