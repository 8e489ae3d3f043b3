//! Extractive summarization with a Transformer document encoder.
//!
//! Each sentence of a document is wrapped as `[CLS] tokens [SEP]`, sentences
//! alternate between two segment embeddings, and the top-layer vector at
//! every `[CLS]` position represents its sentence. A summarization head
//! (linear classifier, inter-sentence Transformer or layer-normalized LSTM)
//! turns those vectors into per-sentence inclusion probabilities.
//!
//! The crate also covers the surrounding pipeline: corpus ingestion, greedy
//! ROUGE oracle labels, training with a warmup schedule, trigram-blocked
//! selection and ROUGE evaluation.

pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod inference;
pub mod model;
pub mod nn;
pub mod oracle;
pub mod rouge;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
