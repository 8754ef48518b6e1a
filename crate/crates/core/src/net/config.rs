use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{conv_output_len, pool_output_len};

/// Kernel counts per building block. The fourth entry continues the decline
/// of the first three.
pub const DEFAULT_CHANNELS: [usize; 4] = [96, 54, 36, 24];
pub const DEFAULT_HIDDEN: [usize; 2] = [512, 128];

/// Architecture of a CNN-k (plain) or CNN-kA (attention) network.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionCnnConfig {
    pub num_blocks: usize,
    pub channels: Vec<usize>,
    pub conv_k: usize,
    pub conv_padding: usize,
    pub pool_k: usize,
    pub pool_stride: usize,
    pub hidden: Vec<usize>,
    pub num_classes: usize,
    pub use_attention: bool,
    pub seed: u64,
}

impl AttentionCnnConfig {
    pub fn new(num_blocks: usize, num_classes: usize, use_attention: bool, seed: u64) -> Self {
        Self {
            num_blocks,
            channels: DEFAULT_CHANNELS.to_vec(),
            conv_k: 5,
            conv_padding: 2,
            pool_k: 2,
            pool_stride: 2,
            hidden: DEFAULT_HIDDEN.to_vec(),
            num_classes,
            use_attention,
            seed,
        }
    }

    /// Short architecture tag, e.g. `CNN-3A`.
    pub fn name(&self) -> String {
        format!(
            "CNN-{}{}",
            self.num_blocks,
            if self.use_attention { "A" } else { "" }
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.num_blocks) {
            return Err(Error::InvalidArgument(format!(
                "unsupported depth {} (expected 2, 3 or 4 blocks)",
                self.num_blocks
            )));
        }
        if self.channels.len() < self.num_blocks || self.channels.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "{} blocks need as many positive channel counts, got {:?}",
                self.num_blocks, self.channels
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden widths must be positive".into()));
        }
        Ok(())
    }

    /// Spectral length after each building block for an input of `bands`.
    pub fn level_lengths(&self, bands: usize) -> Result<Vec<usize>> {
        let mut len = bands;
        let mut out = Vec::with_capacity(self.num_blocks);
        for block in 1..=self.num_blocks {
            len = conv_output_len(len, self.conv_k, 1, self.conv_padding).map_err(|e| {
                stage_error(e, format!("block {block} convolution (input length {len})"))
            })?;
            len = pool_output_len(len, self.pool_k, self.pool_stride).map_err(|e| {
                stage_error(e, format!("block {block} max pooling (input length {len})"))
            })?;
            out.push(len);
        }
        Ok(out)
    }

    /// Width of the flattened final feature maps fed to the classifier head.
    pub fn flatten_len(&self, bands: usize) -> Result<usize> {
        let lengths = self.level_lengths(bands)?;
        Ok(lengths[self.num_blocks - 1] * self.channels[self.num_blocks - 1])
    }
}

fn stage_error(err: Error, stage: String) -> Error {
    match err {
        Error::TooShort {
            length, required, ..
        } => Error::TooShort {
            stage,
            length,
            required,
        },
        other => other,
    }
}
