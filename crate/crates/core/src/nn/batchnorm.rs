use crate::error::{Error, Result};
use crate::tensor::{Param, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Per-channel batch normalization over every axis except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct BatchNormCache {
    mode: Mode,
    x_hat: Vec<f64>,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    count: usize,
    shape: Vec<usize>,
}

impl BatchNorm1d {
    pub const DEFAULT_MOMENTUM: f64 = 0.1;
    pub const DEFAULT_EPSILON: f64 = 1e-5;

    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::filled(&[channels], 1.0)),
            beta: Param::zeros(&[channels]),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: Self::DEFAULT_MOMENTUM,
            epsilon: Self::DEFAULT_EPSILON,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    /// Normalizes `input`; in train mode also folds the batch statistics
    /// into the running estimates.
    pub fn forward(&mut self, input: &Tensor, mode: Mode) -> Result<(Tensor, BatchNormCache)> {
        let (out, cache) = self.forward_stateless(input, mode)?;
        self.update_running(&cache);
        Ok((out, cache))
    }

    /// Forward pass that leaves the running statistics untouched.
    pub fn forward_stateless(&self, input: &Tensor, mode: Mode) -> Result<(Tensor, BatchNormCache)> {
        let c = self.channels();
        let shape = input.shape();
        if shape.len() < 2 || *shape.last().unwrap() != c {
            return Err(Error::Shape(format!(
                "batchnorm over {c} channels got {shape:?}"
            )));
        }
        if mode == Mode::Train && shape[0] < 2 {
            return Err(Error::InvalidArgument(format!(
                "train-mode batch norm needs at least 2 samples, got {}",
                shape[0]
            )));
        }
        let x = input.data();
        let count = x.len() / c;

        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                for row in x.chunks_exact(c) {
                    for (m, &v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= count as f64);
                let mut var = vec![0.0; c];
                for row in x.chunks_exact(c) {
                    for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= count as f64);
                (mean, var)
            }
            Mode::Infer => (self.running_mean.clone(), self.running_var.clone()),
        };

        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.epsilon).sqrt()).collect();
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        let mut x_hat = Vec::with_capacity(x.len());
        let mut out = Vec::with_capacity(x.len());
        for row in x.chunks_exact(c) {
            for ch in 0..c {
                let h = (row[ch] - mean[ch]) * inv_std[ch];
                x_hat.push(h);
                out.push(gamma[ch] * h + beta[ch]);
            }
        }
        let cache = BatchNormCache {
            mode,
            x_hat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
            count,
            shape: shape.to_vec(),
        };
        Ok((Tensor::from_vec(shape, out)?, cache))
    }

    /// Exponential moving average update from a train-mode cache; no-op for
    /// infer-mode caches. The variance estimate is unbiased.
    pub fn update_running(&mut self, cache: &BatchNormCache) {
        if cache.mode != Mode::Train {
            return;
        }
        let unbias = cache.count as f64 / (cache.count as f64 - 1.0);
        for ch in 0..self.channels() {
            self.running_mean[ch] = (1.0 - self.momentum) * self.running_mean[ch]
                + self.momentum * cache.batch_mean[ch];
            self.running_var[ch] = (1.0 - self.momentum) * self.running_var[ch]
                + self.momentum * cache.batch_var[ch] * unbias;
        }
    }

    /// Accumulates gamma/beta gradients and returns the input gradient,
    /// propagating through the batch mean and variance in train mode.
    pub fn backward(&mut self, cache: &BatchNormCache, grad_out: &Tensor) -> Result<Tensor> {
        if grad_out.shape() != cache.shape.as_slice() {
            return Err(Error::Shape(format!(
                "batchnorm grad {:?} vs {:?}",
                grad_out.shape(),
                cache.shape
            )));
        }
        let c = self.channels();
        let g = grad_out.data();
        let count = g.len() / c;

        let mut sum_g = vec![0.0; c];
        let mut sum_gx = vec![0.0; c];
        for (grow, hrow) in g.chunks_exact(c).zip(cache.x_hat.chunks_exact(c)) {
            for ch in 0..c {
                sum_g[ch] += grow[ch];
                sum_gx[ch] += grow[ch] * hrow[ch];
            }
        }
        for ch in 0..c {
            self.gamma.grad.data_mut()[ch] += sum_gx[ch];
            self.beta.grad.data_mut()[ch] += sum_g[ch];
        }

        let gamma = self.gamma.value.data();
        let mut gx = Vec::with_capacity(g.len());
        match cache.mode {
            Mode::Train => {
                let m = count as f64;
                for (grow, hrow) in g.chunks_exact(c).zip(cache.x_hat.chunks_exact(c)) {
                    for ch in 0..c {
                        let v = gamma[ch] * cache.inv_std[ch] / m
                            * (m * grow[ch] - sum_g[ch] - hrow[ch] * sum_gx[ch]);
                        gx.push(v);
                    }
                }
            }
            Mode::Infer => {
                for grow in g.chunks_exact(c) {
                    for ch in 0..c {
                        gx.push(grow[ch] * gamma[ch] * cache.inv_std[ch]);
                    }
                }
            }
        }
        Tensor::from_vec(&cache.shape, gx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardized_batch_passes_through() {
        let mut bn = BatchNorm1d::new(1);
        let x = Tensor::from_vec(&[4, 1], vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn constant_channel_maps_to_beta() {
        let mut bn = BatchNorm1d::new(2);
        bn.beta.value = Tensor::from_vec(&[2], vec![0.5, -0.25]).unwrap();
        let x = Tensor::filled(&[3, 4, 2], 7.0);
        let (y, _) = bn.forward(&x, Mode::Train).unwrap();
        for row in y.data().chunks(2) {
            assert!((row[0] - 0.5).abs() < 1e-9);
            assert!((row[1] + 0.25).abs() < 1e-9);
        }
    }

    #[test]
    fn single_sample_rejected_in_train_mode() {
        let mut bn = BatchNorm1d::new(3);
        assert!(bn.forward(&Tensor::zeros(&[1, 5, 3]), Mode::Train).is_err());
        assert!(bn.forward(&Tensor::zeros(&[1, 5, 3]), Mode::Infer).is_ok());
    }

    #[test]
    fn running_statistics_follow_momentum() {
        let mut bn = BatchNorm1d::new(1);
        let x = Tensor::from_vec(&[2, 1], vec![1.0, 3.0]).unwrap();
        bn.forward(&x, Mode::Train).unwrap();
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-12);
        // unbiased batch variance is 2
        assert!((bn.running_var[0] - (0.9 + 0.2)).abs() < 1e-12);
        assert!(bn.running_var[0] >= 0.0);
    }
}
