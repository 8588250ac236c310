//! The student CRNN: a four-block convolutional trunk (two 3×3 conv +
//! batch-norm + ReLU units and a 2×2 average pool per block), frequency mean
//! pooling, an optional two-layer bidirectional GRU, and two fully
//! connected layers with the one-hot camera view concatenated between them.

mod config;
pub mod gradcheck;
mod infer;
pub mod layers;
mod network;
pub mod real;
mod train;

pub use config::{ConvUnit, CrnnConfig, GruDir, Layout, TensorInfo, Variant, CHUNK_FRAMES, SHORT_FRAMES, TRUNK_STRIDE};
pub use infer::{infer_predictions, infer_track, predict_chunk, predictions_to_track, stitch};
pub use layers::BnMode;
pub use network::{backward, forward, forward_batch, loss, masked_loss, stack_inputs, CrnnParams, ForwardPass, Prediction};
pub use real::Real;
pub use train::{prepare_windows, train, train_step, train_with, update_running_stats, AdamState, EpochRecord, Sample, TrainConfig, TrainHistory, TrainOutcome};
#[cfg(test)]
mod tests;
