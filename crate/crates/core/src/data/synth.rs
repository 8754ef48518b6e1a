use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::cube::HsiCube;
use super::ground_truth::GroundTruth;
use crate::error::{Error, Result};

/// Largest class offset added at a planted band.
pub const PLANTED_OFFSET: f64 = 0.3;

/// Parameters of a synthetic cube whose classes differ only at a few
/// planted bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub bands: usize,
    pub classes: usize,
    pub planted: Vec<usize>,
    pub sigma: f64,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// 600 pixels per class for three classes and bands {5, 13, 27} of 32.
    pub fn planted_default(seed: u64) -> Self {
        Self {
            bands: 32,
            classes: 3,
            planted: vec![5, 13, 27],
            sigma: 0.05,
            rows: 30,
            cols: 60,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.bands == 0 || self.classes == 0 || self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidArgument(
                "bands, classes, rows and cols must be positive".into(),
            ));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise sigma {}", self.sigma)));
        }
        let mut p = self.planted.clone();
        p.sort_unstable();
        p.dedup();
        if p.len() != self.planted.len() {
            return Err(Error::InvalidArgument("planted bands must be distinct".into()));
        }
        if let Some(&j) = p.iter().find(|&&j| j >= self.bands) {
            return Err(Error::InvalidArgument(format!(
                "planted band {j} out of range for {} bands",
                self.bands
            )));
        }
        Ok(())
    }
}

/// Noise-free spectrum shared by every class.
pub fn baseline(bands: usize) -> Vec<f64> {
    (0..bands)
        .map(|j| 0.5 + 0.2 * (2.0 * PI * j as f64 / bands as f64).sin())
        .collect()
}

/// Offset of class `c` (0-based) at the `k`-th planted band. Each planted
/// band ranks the classes in a different rotation.
pub fn planted_offset(c: usize, k: usize, classes: usize) -> f64 {
    if classes < 2 {
        return 0.0;
    }
    PLANTED_OFFSET * ((c + k) % classes) as f64 / (classes - 1) as f64
}

/// Noise-free class mean spectrum.
pub fn class_mean(spec: &SynthSpec, c: usize) -> Vec<f64> {
    let mut s = baseline(spec.bands);
    for (k, &j) in spec.planted.iter().enumerate() {
        s[j] += planted_offset(c, k, spec.classes);
    }
    s
}

/// Pixel `p` gets label `1 + p mod C`; its spectrum is the class mean plus
/// i.i.d. Gaussian noise.
pub fn synth_cube(spec: &SynthSpec) -> Result<(HsiCube, GroundTruth)> {
    spec.validate()?;
    let means: Vec<Vec<f64>> = (0..spec.classes).map(|c| class_mean(spec, c)).collect();
    let normal = Normal::new(0.0, spec.sigma)
        .map_err(|e| Error::InvalidArgument(format!("noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.rows * spec.cols;
    let mut data = Vec::with_capacity(n * spec.bands);
    let mut labels = Vec::with_capacity(n);
    for p in 0..n {
        let c = p % spec.classes;
        labels.push(c as u16 + 1);
        for &m in &means[c] {
            let noise = if spec.sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            data.push((m + noise) as f32);
        }
    }
    let cube = HsiCube::new(spec.rows, spec.cols, spec.bands, data)?;
    let gt = GroundTruth::new(spec.rows, spec.cols, labels)?;
    Ok((cube, gt))
}
