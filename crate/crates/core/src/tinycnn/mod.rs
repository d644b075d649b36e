//! A small convolutional patch classifier trained from scratch.

mod augment;
mod checkpoint;
mod net;
mod saliency;
mod train;

pub use augment::{augment, gaussian_blur, perspective_warp, posterize, preprocess, sharpen};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use net::{softmax2, ConvNet, NetConfig, Real, Tensor};
pub use saliency::saliency_map;
pub use train::{
    hyper_search, mean_loss, predict_many, predict_patch, train, train_fixed, write_history_csv,
    write_trials_csv, EarlyStopper, EpochRecord, Example, OptimizerKind, SearchOutcome,
    SearchSpace, StopDecision, TrainConfig, TrainOutcome, TrialRecord, LEARNING_RATE_RANGE,
    MAX_EPOCHS_LIMIT,
};

#[derive(Debug, thiserror::Error)]
pub enum CnnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("training set must contain both classes")]
    SingleClass,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
