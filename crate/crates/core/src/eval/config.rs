use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::SynthSpec;
use crate::error::{Error, Result};
use crate::net::{AttentionCnnConfig, TrainOptions};
use crate::select::DEFAULT_LAMBDAS;

/// Network depth and whether attention modules are attached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Architecture {
    pub blocks: usize,
    pub attention: bool,
}

impl Architecture {
    pub fn new(blocks: usize, attention: bool) -> Self {
        Self { blocks, attention }
    }

    /// CNN-2, CNN-3, CNN-4, each with and without attention.
    pub fn all() -> Vec<Self> {
        (2..=4)
            .flat_map(|b| [Self::new(b, false), Self::new(b, true)])
            .collect()
    }

    pub fn net_config(&self, num_classes: usize, seed: u64) -> AttentionCnnConfig {
        AttentionCnnConfig::new(self.blocks, num_classes, self.attention, seed)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CNN-{}{}", self.blocks, if self.attention { "A" } else { "" })
    }
}

/// Accepts `CNN-2A`, `cnn-3`, `2A`, `4`.
impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_uppercase();
        let t = t.strip_prefix("CNN-").unwrap_or(&t);
        let (digits, attention) = match t.strip_suffix('A') {
            Some(d) => (d, true),
            None => (t, false),
        };
        let blocks = digits
            .parse::<usize>()
            .map_err(|_| Error::Parse(format!("architecture {s:?}")))?;
        Ok(Self { blocks, attention })
    }
}

impl Serialize for Architecture {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Architecture {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Where the labeled pixels come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Files {
        cube: PathBuf,
        /// Defaults to the cube path with a `.toml` extension.
        header: Option<PathBuf>,
        ground_truth: PathBuf,
    },
    Synthetic(SynthSpec),
}

fn default_runs() -> usize {
    30
}

fn default_architectures() -> Vec<Architecture> {
    Architecture::all()
}

fn default_lambdas() -> Vec<f64> {
    DEFAULT_LAMBDAS.to_vec()
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Run `r` uses seed `base_seed + r` for its split, initialization and
    /// batch order.
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_architectures")]
    pub architectures: Vec<Architecture>,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub train: TrainOptions,
    /// Retrain and evaluate on every distinct band selection.
    #[serde(default = "default_true")]
    pub evaluate_reduced: bool,
    pub data: Option<DataSource>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            runs: default_runs(),
            base_seed: 0,
            architectures: default_architectures(),
            lambdas: default_lambdas(),
            train: TrainOptions::default(),
            evaluate_reduced: true,
            data: None,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Parse(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("experiment config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::InvalidArgument("runs must be at least 1".into()));
        }
        if self.architectures.is_empty() {
            return Err(Error::InvalidArgument("no architectures configured".into()));
        }
        for a in &self.architectures {
            a.net_config(2, 0).validate()?;
        }
        if let Some(l) = self.lambdas.iter().find(|l| !(**l > 0.0 && **l < 0.5)) {
            return Err(Error::InvalidArgument(format!(
                "contamination rate {l} outside (0, 0.5)"
            )));
        }
        if self.train.batch_size < 2 || self.train.max_epochs == 0 {
            return Err(Error::InvalidArgument(
                "batch size must be at least 2 and max epochs at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn run_seed(&self, run: usize) -> u64 {
        self.base_seed.wrapping_add(run as u64)
    }

    pub fn attention_architectures(&self) -> Vec<Architecture> {
        self.architectures
            .iter()
            .copied()
            .filter(|a| a.attention)
            .collect()
    }
}
