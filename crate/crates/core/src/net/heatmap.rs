use super::dataset::Samples;
use super::model::AttentionCnnModel;
use crate::error::{Error, Result};
use crate::nn::Mode;
use crate::select::Heatmap;

/// Piecewise-linear resampling of `src` onto `len` points, with both
/// endpoints anchored.
pub fn upsample_linear(src: &[f64], len: usize) -> Vec<f64> {
    match (src.len(), len) {
        (_, 0) | (0, _) => Vec::new(),
        (1, _) => vec![src[0]; len],
        (_, 1) => vec![src[0]],
        (n, _) => (0..len)
            .map(|k| {
                let t = k as f64 * (n - 1) as f64 / (len - 1) as f64;
                let i = (t.floor() as usize).min(n - 2);
                let frac = t - i as f64;
                src[i] * (1.0 - frac) + src[i + 1] * frac
            })
            .collect(),
    }
}

fn normalize(v: &mut [f64]) {
    let sum: f64 = v.iter().sum();
    if sum > 0.0 {
        v.iter_mut().for_each(|x| *x /= sum);
    }
}

/// Band-level attention heatmap: every level's spatial heatmap is
/// upsampled to the band count and renormalized, levels are averaged, then
/// samples are averaged. `class` restricts the average to one label.
pub fn extract_heatmap(
    model: &AttentionCnnModel,
    samples: &Samples,
    class: Option<usize>,
) -> Result<Heatmap> {
    if !model.config.use_attention {
        return Err(Error::InvalidArgument(format!(
            "{} has no attention modules",
            model.config.name()
        )));
    }
    let b = model.bands;
    let idx: Vec<usize> = (0..samples.len())
        .filter(|&i| class.is_none_or(|c| samples.labels()[i] == c))
        .collect();
    if idx.is_empty() {
        return Err(Error::Data("no samples to extract a heatmap from".into()));
    }

    let mut acc = vec![0.0; b];
    for chunk in idx.chunks(512) {
        let (x, _) = samples.batch(chunk);
        let rec = model.forward(&x, Mode::Infer)?;
        let levels = rec.attention.len() as f64;
        for level in &rec.attention {
            let len = level.heatmap.shape()[1];
            for row in level.heatmap.data().chunks_exact(len) {
                let mut up = upsample_linear(row, b);
                normalize(&mut up);
                for (a, u) in acc.iter_mut().zip(&up) {
                    *a += u / levels;
                }
            }
        }
    }
    let n = idx.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    normalize(&mut acc);
    let tag = match class {
        Some(c) => format!("{}:class{c}", model.config.name()),
        None => model.config.name(),
    };
    Heatmap::new(acc, vec![tag])
}
