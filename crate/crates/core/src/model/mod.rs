//! The summarization model: multi-sentence input encoding, the Transformer
//! document encoder, the three scoring heads and checkpoints.

mod bertsum;
pub mod checkpoint;
mod config;
pub mod encoding;

pub use bertsum::{sinusoidal_positions, BertSum, ClsVectors, SentenceScores};
pub use checkpoint::{Checkpoint, CheckpointHeader, NamedTensor, OptimizerSnapshot};
pub use config::{HeadKind, ModelConfig, SegmentScheme};
pub use encoding::{encode_input, segment_for, EncodedInput, SEGMENT_A, SEGMENT_B};
