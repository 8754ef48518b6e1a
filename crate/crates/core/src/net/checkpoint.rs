//! Versioned binary checkpoint container.
//!
//! Layout: 8-byte magic, `u32` LE version, `u32` LE header length, a TOML
//! header (config, band count, optional input scaler, block table), then
//! each block as little-endian `f32` values in header order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::AttentionCnnConfig;
use super::dataset::MinMaxScaler;
use super::model::AttentionCnnModel;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SPBANDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model together with the scaling applied to its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: AttentionCnnModel,
    pub scaler: Option<MinMaxScaler>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BlockInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    bands: usize,
    config: AttentionCnnConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scaler: Option<MinMaxScaler>,
    blocks: Vec<BlockInfo>,
}

fn blocks_of(model: &AttentionCnnModel) -> Vec<(String, Vec<usize>, Vec<f64>)> {
    let mut out: Vec<_> = model
        .params()
        .into_iter()
        .map(|(name, p)| (name, p.shape().to_vec(), p.value.data().to_vec()))
        .collect();
    for (i, b) in model.blocks.iter().enumerate() {
        let c = b.bn.channels();
        out.push((format!("block{}.bn.running_mean", i + 1), vec![c], b.bn.running_mean.clone()));
        out.push((format!("block{}.bn.running_var", i + 1), vec![c], b.bn.running_var.clone()));
    }
    out
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Result<Vec<u8>> {
    let blocks = blocks_of(&ckpt.model);
    let header = Header {
        bands: ckpt.model.bands,
        config: ckpt.model.config.clone(),
        scaler: ckpt.scaler.clone(),
        blocks: blocks
            .iter()
            .map(|(name, shape, _)| BlockInfo {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    let text = toml::to_string(&header).map_err(|e| Error::Parse(e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(text.len() as u32).to_le_bytes());
    buf.extend_from_slice(text.as_bytes());
    for (_, _, values) in &blocks {
        for &v in values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let bad = |msg: String| Error::Parse(format!("checkpoint: {msg}"));
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("missing magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let text = bytes
        .get(16..16 + hlen)
        .ok_or_else(|| bad("truncated header".into()))?;
    let text = std::str::from_utf8(text).map_err(|e| bad(e.to_string()))?;
    let header: Header = toml::from_str(text).map_err(|e| bad(e.to_string()))?;

    let mut model = AttentionCnnModel::new(header.config, header.bands)?;
    let expected = blocks_of(&model);
    if expected.len() != header.blocks.len()
        || expected
            .iter()
            .zip(&header.blocks)
            .any(|((n, s, _), info)| *n != info.name || *s != info.shape)
    {
        return Err(bad("block table does not match the configured architecture".into()));
    }
    let total: usize = expected.iter().map(|(_, _, v)| v.len()).sum();
    let payload = &bytes[16 + hlen..];
    if payload.len() != total * 4 {
        return Err(bad(format!(
            "expected {} payload bytes, found {}",
            total * 4,
            payload.len()
        )));
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64);

    for p in model.params_mut() {
        for v in p.value.data_mut() {
            *v = values.next().unwrap();
        }
    }
    for b in &mut model.blocks {
        for v in b.bn.running_mean.iter_mut().chain(b.bn.running_var.iter_mut()) {
            *v = values.next().unwrap();
        }
    }
    Ok(Checkpoint {
        model,
        scaler: header.scaler,
    })
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bytes = encode_checkpoint(ckpt)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_f32_values() {
        let mut model = AttentionCnnModel::new(AttentionCnnConfig::new(2, 3, true, 5), 16).unwrap();
        model.blocks[0].bn.running_mean[3] = 0.25;
        for p in model.params_mut() {
            for v in p.value.data_mut() {
                *v = (*v as f32) as f64;
            }
        }
        let ckpt = Checkpoint {
            model,
            scaler: Some(MinMaxScaler {
                min: vec![0.0; 16],
                max: vec![2.0; 16],
            }),
        };
        let bytes = encode_checkpoint(&ckpt).unwrap();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.scaler, ckpt.scaler);
        for ((na, a), (nb, b)) in back.model.params().iter().zip(ckpt.model.params()) {
            assert_eq!(na, &nb);
            assert_eq!(a.value, b.value);
        }
        assert_eq!(back.model.blocks[0].bn.running_mean[3], 0.25);
    }

    #[test]
    fn rejects_truncation_and_bad_magic() {
        let model = AttentionCnnModel::new(AttentionCnnConfig::new(2, 3, false, 5), 8).unwrap();
        let bytes = encode_checkpoint(&Checkpoint { model, scaler: None }).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 4]).is_err());
        let mut corrupt = bytes.clone();
        corrupt[0] = b'X';
        assert!(decode_checkpoint(&corrupt).is_err());
    }
}
