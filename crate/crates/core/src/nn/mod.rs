//! Dense fp64 tensors, a reverse-mode tape and the layers built on it.

pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod params;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Gradients, Graph, Var};
pub use layers::{
    Dropout, FeedForward, LayerNorm, LayerNormLstmCell, Linear, LstmCellState, MultiHeadAttention,
    TransformerBlock,
};
pub use params::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
