//! TDS sequence model trained with CTC.

pub mod checkpoint;
pub mod ctc;
pub mod layout;
pub mod model;
pub mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointHeader,
};
pub use ctc::{ctc_loss, greedy_decode, greedy_path, min_frames, target_classes, CtcOutput, BLANK};
pub use layout::ChannelLayout;
pub use model::{
    InputNorm, Offsets, TdsConfig, TdsModel, DEFAULT_BLOCKS, DEFAULT_HIDDEN, DEFAULT_KERNEL,
    MAX_RECEPTIVE_FIELD, SHIFTS,
};
pub use train::{
    clip_gradient, decode, decode_all, evaluate, metrics_csv, train, Adam, EpochMetrics, Example,
    TrainConfig, TrainOutcome,
};

/// Frame hop the model's receptive field is specified against.
pub const HOP_MS: f64 = 20.0;
