use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Floor added inside the logarithm of the negative log-likelihood.
pub const LOSS_FLOOR: f64 = 1e-12;

/// Softmax along the last axis (max-subtracted).
pub fn softmax(input: &Tensor) -> Tensor {
    let width = *input.shape().last().unwrap_or(&1);
    let mut out = input.clone();
    if width == 0 {
        return out;
    }
    for row in out.data_mut().chunks_exact_mut(width) {
        softmax_in_place(row);
    }
    out
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    row.iter_mut().for_each(|v| *v /= sum);
}

/// Gradient through softmax given its output: `p ⊙ (g − ⟨g, p⟩)` per row.
pub fn softmax_backward(probs: &Tensor, grad: &Tensor) -> Result<Tensor> {
    if probs.shape() != grad.shape() {
        return Err(Error::Shape(format!(
            "softmax grad {:?} vs {:?}",
            grad.shape(),
            probs.shape()
        )));
    }
    let width = *probs.shape().last().unwrap_or(&1);
    let mut out = Vec::with_capacity(probs.len());
    for (p, g) in probs.data().chunks_exact(width).zip(grad.data().chunks_exact(width)) {
        let inner: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        out.extend(p.iter().zip(g).map(|(a, b)| a * (b - inner)));
    }
    Tensor::from_vec(probs.shape(), out)
}

/// `−ln(p[label] + 1e-12)`.
pub fn nll_loss(probs: &[f64], label: usize) -> Result<f64> {
    let p = probs.get(label).ok_or_else(|| {
        Error::InvalidArgument(format!("label {label} out of range for {} classes", probs.len()))
    })?;
    Ok(-(p + LOSS_FLOOR).ln())
}

/// Mean loss over a `[N, C]` batch and its gradient with respect to the
/// probabilities.
pub fn nll_loss_batch(probs: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let [n, c] = *probs.shape() else {
        return Err(Error::Shape(format!("nll expects [N, C], got {:?}", probs.shape())));
    };
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} samples", labels.len())));
    }
    let mut grad = Tensor::zeros(&[n, c]);
    let mut total = 0.0;
    for (i, &label) in labels.iter().enumerate() {
        let row = probs.row(i);
        total += nll_loss(row, label)?;
        grad.row_mut(i)[label] = -1.0 / ((row[label] + LOSS_FLOOR) * n as f64);
    }
    Ok((total / n as f64, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_and_hand_cases() {
        let p = softmax(&Tensor::filled(&[4], 2.5));
        assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let p = softmax(&Tensor::from_vec(&[2], vec![0.0, 3f64.ln()]).unwrap());
        assert!((p.data()[0] - 0.25).abs() < 1e-12);
        assert!((p.data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn shift_invariance_and_large_inputs() {
        let x = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let a = softmax(&x);
        let b = softmax(&x.map(|v| v + 1000.0));
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!(b.all_finite());
    }

    #[test]
    fn nll_cases() {
        assert!(nll_loss(&[0.0, 1.0], 1).unwrap().abs() < 1e-11);
        assert!((nll_loss(&[0.25; 4], 2).unwrap() - 4f64.ln()).abs() < 1e-9);
        let floor = nll_loss(&[1.0, 0.0], 1).unwrap();
        assert!(floor.is_finite() && floor > 27.0);
        assert!(nll_loss(&[0.5, 0.5], 2).is_err());
    }
}
