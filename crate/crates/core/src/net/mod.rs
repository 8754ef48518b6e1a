//! CNN-k / CNN-kA spectral networks: architecture, training with early
//! stopping, heatmap extraction and checkpoints.

mod checkpoint;
mod config;
mod dataset;
mod heatmap;
mod model;
mod train;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{AttentionCnnConfig, DEFAULT_CHANNELS, DEFAULT_HIDDEN};
pub use dataset::{MinMaxScaler, Samples};
pub use heatmap::{extract_heatmap, upsample_linear};
pub use model::{
    weighted_average, AttentionCnnModel, AttentionModule, Block, ForwardRecord, Head,
    LevelAttention, Tape,
};
pub use train::{accuracy, predict_all, train, EpochRecord, TrainHistory, TrainOptions};
