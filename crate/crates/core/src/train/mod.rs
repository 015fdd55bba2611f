//! Negative sampling, BCE loss assembly, Adam, the epoch loop and checkpoints.

mod adam;
mod checkpoint;
mod loss;
mod negatives;
mod trainer;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CheckpointHeader, TensorEntry, FORMAT_VERSION};
pub use loss::{batch_loss, pairs_loss};
pub use negatives::{sample_negatives, LossConfig, NegativeCount};
pub use trainer::{train, train_batch, validation_mrr, EpochLog, TrainConfig, Trained};
