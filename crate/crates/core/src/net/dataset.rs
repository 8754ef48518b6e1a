use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Labeled spectra packed row-major, one row of `bands` values per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    bands: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl Samples {
    pub fn new(bands: usize, features: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        if bands == 0 || features.len() != bands * labels.len() {
            return Err(Error::Shape(format!(
                "{} values for {} samples of {bands} bands",
                features.len(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite spectral value".into()));
        }
        Ok(Self {
            bands,
            features,
            labels,
        })
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn spectrum(&self, i: usize) -> &[f64] {
        &self.features[i * self.bands..(i + 1) * self.bands]
    }

    /// `[N, b]` tensor and labels for the given sample indices.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let mut data = Vec::with_capacity(indices.len() * self.bands);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.spectrum(i));
            labels.push(self.labels[i]);
        }
        let t = Tensor::from_vec(&[indices.len(), self.bands], data).expect("batch shape");
        (t, labels)
    }

    /// Subset of samples carrying `label`.
    pub fn filter_class(&self, label: usize) -> Samples {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == label).collect();
        let (t, labels) = self.batch(&idx);
        Samples {
            bands: self.bands,
            features: t.into_data(),
            labels,
        }
    }
}

/// Per-band min-max scaling to `[0, 1]`, fitted on training spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(samples: &Samples) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Data("cannot fit scaler on no samples".into()));
        }
        let b = samples.bands();
        let mut min = vec![f64::INFINITY; b];
        let mut max = vec![f64::NEG_INFINITY; b];
        for row in samples.features().chunks_exact(b) {
            for j in 0..b {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        Ok(Self { min, max })
    }

    pub fn bands(&self) -> usize {
        self.min.len()
    }

    /// Constant bands map to 0.
    pub fn transform(&self, samples: &Samples) -> Result<Samples> {
        let b = self.bands();
        if samples.bands() != b {
            return Err(Error::Shape(format!(
                "scaler fitted on {b} bands, data has {}",
                samples.bands()
            )));
        }
        let mut features = samples.features().to_vec();
        for row in features.chunks_exact_mut(b) {
            for j in 0..b {
                let span = self.max[j] - self.min[j];
                row[j] = if span > 0.0 {
                    (row[j] - self.min[j]) / span
                } else {
                    0.0
                };
            }
        }
        Samples::new(b, features, samples.labels().to_vec())
    }

    /// Keeps only the given bands.
    pub fn select(&self, bands: &[usize]) -> Self {
        Self {
            min: bands.iter().map(|&j| self.min[j]).collect(),
            max: bands.iter().map(|&j| self.max[j]).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaler_maps_training_range_to_unit_interval() {
        let s = Samples::new(2, vec![1.0, 5.0, 3.0, 5.0, 2.0, 5.0], vec![0, 1, 0]).unwrap();
        let scaler = MinMaxScaler::fit(&s).unwrap();
        let t = scaler.transform(&s).unwrap();
        assert_eq!(t.features(), &[0.0, 0.0, 1.0, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn rejects_ragged_and_non_finite() {
        assert!(Samples::new(3, vec![0.0; 5], vec![0, 1]).is_err());
        assert!(Samples::new(1, vec![f64::NAN], vec![0]).is_err());
    }
}
