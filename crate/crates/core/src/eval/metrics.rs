use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
    n: u64,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; num_classes]; num_classes],
            n: 0,
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if counts.iter().any(|r| r.len() != c) {
            return Err(Error::Shape("confusion matrix must be square".into()));
        }
        let n = counts.iter().flatten().sum();
        Ok(Self { counts, n })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.n
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let c = self.num_classes();
        if truth >= c || predicted >= c {
            return Err(Error::InvalidArgument(format!(
                "label pair ({truth}, {predicted}) out of range for {c} classes"
            )));
        }
        self.counts[truth][predicted] += 1;
        self.n += 1;
        Ok(())
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.num_classes())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        self.trace() == self.n
    }
}

pub fn confusion(
    predictions: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> Result<ConfusionMatrix> {
    if predictions.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(num_classes);
    for (&p, &t) in predictions.iter().zip(labels) {
        cm.add(t, p)?;
    }
    Ok(cm)
}

/// Cohen's kappa `1 − (1 − p_o) / (1 − p_e)`.
pub fn kappa(cm: &ConfusionMatrix) -> Result<f64> {
    if cm.n == 0 {
        return Err(Error::Degenerate("kappa of an empty confusion matrix".into()));
    }
    // (p_o − p_e) / (1 − p_e) scaled by n², evaluated in integers so the
    // only rounding is the final division
    let n = cm.n as u128;
    let agree = n * cm.trace() as u128;
    let chance: u128 = cm
        .row_sums()
        .iter()
        .zip(cm.col_sums())
        .map(|(&r, c)| r as u128 * c as u128)
        .sum();
    if chance >= n * n {
        return Err(Error::Degenerate(
            "kappa undefined: expected agreement is 1".into(),
        ));
    }
    Ok((agree as f64 - chance as f64) / (n * n - chance) as f64)
}

/// Per-class accuracies (`None` for classes with no true samples) and their
/// unweighted mean over the classes present.
pub fn average_accuracy(cm: &ConfusionMatrix) -> Result<(Vec<Option<f64>>, f64)> {
    let per_class: Vec<Option<f64>> = cm
        .row_sums()
        .iter()
        .enumerate()
        .map(|(i, &r)| (r > 0).then(|| cm.counts[i][i] as f64 / r as f64))
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::Degenerate("no class has any true samples".into()));
    }
    let absent: Vec<usize> = (0..per_class.len())
        .filter(|&i| per_class[i].is_none())
        .collect();
    if !absent.is_empty() {
        warn!("classes {absent:?} absent from the evaluation set, excluded from AA");
    }
    let aa = present.iter().sum::<f64>() / present.len() as f64;
    Ok((per_class, aa))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// NaN for classes absent from the evaluation set.
    pub per_class_accuracy: Vec<f64>,
    pub absent_classes: Vec<usize>,
    pub average_accuracy: f64,
    pub kappa: f64,
    pub overall_accuracy: f64,
}

impl MetricsReport {
    pub fn from_confusion(cm: &ConfusionMatrix) -> Result<Self> {
        let (per_class, aa) = average_accuracy(cm)?;
        Ok(Self {
            absent_classes: (0..per_class.len())
                .filter(|&i| per_class[i].is_none())
                .collect(),
            per_class_accuracy: per_class.iter().map(|a| a.unwrap_or(f64::NAN)).collect(),
            average_accuracy: aa,
            kappa: kappa(cm)?,
            overall_accuracy: cm.trace() as f64 / cm.n as f64,
        })
    }

    pub fn evaluate(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<Self> {
        Self::from_confusion(&confusion(predictions, labels, num_classes)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_off_diagonal_sample() {
        let cm = confusion(&[0], &[1], 2).unwrap();
        assert_eq!(cm.counts()[1][0], 1);
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn out_of_range_label() {
        assert!(confusion(&[0, 2], &[0, 1], 2).is_err());
        assert!(confusion(&[0], &[0, 1], 2).is_err());
    }

    #[test]
    fn kappa_is_undefined_for_one_class_on_both_axes() {
        let cm = ConfusionMatrix::from_counts(vec![vec![5, 0], vec![0, 0]]).unwrap();
        assert!(matches!(kappa(&cm), Err(Error::Degenerate(_))));
    }

    #[test]
    fn absent_class_excluded_from_aa() {
        let cm = ConfusionMatrix::from_counts(vec![vec![1, 1, 0], vec![0, 0, 0], vec![0, 0, 2]])
            .unwrap();
        let (per, aa) = average_accuracy(&cm).unwrap();
        assert_eq!(per, vec![Some(0.5), None, Some(1.0)]);
        assert_eq!(aa, 0.75);
    }
}
