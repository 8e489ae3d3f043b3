//! Optimization: loss, Adam, the learning-rate schedule and the training loop.

pub mod adam;
pub mod loss;
pub mod schedule;
mod trainer;

pub use adam::{AdamConfig, AdamState};
pub use loss::{bce_loss, bce_with_logits};
pub use schedule::lr_schedule;
pub use trainer::{
    accumulate_gradients, mean_loss, prepare_examples, train, train_with_observer, write_log,
    CheckpointPool, EvalEvent, Example, LogRecord, TrainConfig, TrainOutcome,
};
