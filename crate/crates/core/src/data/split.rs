use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::cube::HsiCube;
use super::ground_truth::GroundTruth;
use crate::error::{Error, Result};
use crate::net::Samples;

/// Smallest class size accepted by [`balanced_split`].
pub const MIN_CLASS_SIZE: usize = 10;

/// Non-background pixels with labels shifted to `0..C`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPixels {
    pub bands: usize,
    pub spectra: Vec<f32>,
    pub labels: Vec<usize>,
    /// Row-major pixel index in the source image.
    pub origins: Vec<usize>,
    pub class_counts: Vec<usize>,
}

impl LabeledPixels {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_counts.len()
    }

    pub fn spectrum(&self, i: usize) -> &[f32] {
        &self.spectra[i * self.bands..(i + 1) * self.bands]
    }

    /// Same pixels restricted to `bands` (indices into the current bands).
    pub fn select_bands(&self, bands: &[usize]) -> Result<LabeledPixels> {
        if bands.is_empty() {
            return Err(Error::InvalidArgument("empty band selection".into()));
        }
        if let Some(&j) = bands.iter().find(|&&j| j >= self.bands) {
            return Err(Error::InvalidArgument(format!(
                "band {j} out of range for {} bands",
                self.bands
            )));
        }
        let mut spectra = Vec::with_capacity(self.len() * bands.len());
        for i in 0..self.len() {
            let s = self.spectrum(i);
            spectra.extend(bands.iter().map(|&j| s[j]));
        }
        Ok(LabeledPixels {
            bands: bands.len(),
            spectra,
            labels: self.labels.clone(),
            origins: self.origins.clone(),
            class_counts: self.class_counts.clone(),
        })
    }

    fn samples(&self, idx: &[usize]) -> Result<Samples> {
        let mut features = Vec::with_capacity(idx.len() * self.bands);
        for &i in idx {
            features.extend(self.spectrum(i).iter().map(|&v| v as f64));
        }
        let labels = idx.iter().map(|&i| self.labels[i]).collect();
        Samples::new(self.bands, features, labels)
    }
}

/// Drops background pixels and shifts labels down by one.
pub fn to_pixels(cube: &HsiCube, gt: &GroundTruth) -> Result<LabeledPixels> {
    if cube.rows() != gt.rows() || cube.cols() != gt.cols() {
        return Err(Error::Shape(format!(
            "cube is {}x{}, ground truth is {}x{}",
            cube.rows(),
            cube.cols(),
            gt.rows(),
            gt.cols()
        )));
    }
    let mut out = LabeledPixels {
        bands: cube.bands(),
        spectra: Vec::new(),
        labels: Vec::new(),
        origins: Vec::new(),
        class_counts: vec![0; gt.num_classes()],
    };
    for (p, &l) in gt.labels().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let c = l as usize - 1;
        out.spectra.extend_from_slice(cube.spectrum(p));
        out.labels.push(c);
        out.origins.push(p);
        out.class_counts[c] += 1;
    }
    Ok(out)
}

/// Per-class sample counts of a balanced split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SplitSizes {
    pub minority: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl SplitSizes {
    /// `⌊0.1m⌋` each for validation and test, the rest to training.
    pub fn for_minority(m: usize) -> Self {
        let tenth = m / 10;
        Self {
            minority: m,
            train: m - 2 * tenth,
            validation: tenth,
            test: tenth,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub train: Samples,
    pub validation: Samples,
    pub test: Samples,
    pub train_origins: Vec<usize>,
    pub validation_origins: Vec<usize>,
    pub test_origins: Vec<usize>,
    pub seed: u64,
    pub num_classes: usize,
    /// Identical for every class.
    pub per_class: SplitSizes,
}

/// Under-samples every class to the minority count `m`, then splits each
/// class into training, validation and test parts of sizes given by
/// [`SplitSizes::for_minority`].
pub fn balanced_split(pixels: &LabeledPixels, seed: u64) -> Result<DatasetSplits> {
    if pixels.is_empty() {
        return Err(Error::Data("no labeled pixels to split".into()));
    }
    if let Some((c, &n)) = pixels
        .class_counts
        .iter()
        .enumerate()
        .find(|(_, &n)| n < MIN_CLASS_SIZE)
    {
        return Err(Error::Data(format!(
            "class {} has {n} pixels, at least {MIN_CLASS_SIZE} needed",
            c + 1
        )));
    }
    let m = *pixels.class_counts.iter().min().expect("non-empty");
    let sizes = SplitSizes::for_minority(m);

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); pixels.num_classes()];
    for (i, &l) in pixels.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for idx in &mut by_class {
        idx.shuffle(&mut rng);
        let (a, rest) = idx[..m].split_at(sizes.train);
        let (b, c) = rest.split_at(sizes.validation);
        train.extend_from_slice(a);
        val.extend_from_slice(b);
        test.extend_from_slice(c);
    }
    let origins = |idx: &[usize]| idx.iter().map(|&i| pixels.origins[i]).collect();
    Ok(DatasetSplits {
        train: pixels.samples(&train)?,
        validation: pixels.samples(&val)?,
        test: pixels.samples(&test)?,
        train_origins: origins(&train),
        validation_origins: origins(&val),
        test_origins: origins(&test),
        seed,
        num_classes: pixels.num_classes(),
        per_class: sizes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes() {
        assert_eq!(
            SplitSizes::for_minority(10),
            SplitSizes { minority: 10, train: 8, validation: 1, test: 1 }
        );
        let s = SplitSizes::for_minority(19);
        assert_eq!((s.train, s.validation, s.test), (17, 1, 1));
    }

    #[test]
    fn to_pixels_rejects_mismatched_ground_truth() {
        let cube = HsiCube::new(2, 2, 1, vec![0.0; 4]).unwrap();
        let gt = GroundTruth::new(1, 4, vec![1; 4]).unwrap();
        assert!(matches!(to_pixels(&cube, &gt), Err(Error::Shape(_))));
    }
}
