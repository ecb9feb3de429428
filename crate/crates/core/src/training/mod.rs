//! Softmax cross-entropy, momentum SGD, the training loop and checkpoints.

mod checkpoint;
mod loss;
mod sgd;
mod trainer;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, MAGIC, VERSION,
};
pub use loss::{argmax, softmax_cross_entropy, LossReport};
pub use sgd::{apply_update, LrSchedule, OptimizerState, SgdConfig};
pub use trainer::{
    accuracy, predict_scores, random_crop_flip, train, write_trace_csv, TraceRow, TrainConfig,
    TrainOutcome,
};
