use rand::Rng;

use super::uniform_init;
use crate::error::{Error, Result};
use crate::tensor::{gemm, Param, Tensor};

/// Fully connected layer, `y = x·W + b` with `W` stored `[C_in, C_out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

#[derive(Debug, Clone)]
pub struct LinearCache {
    input: Tensor,
}

impl Linear {
    pub fn new(c_in: usize, c_out: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: Param::new(uniform_init(&[c_in, c_out], c_in, rng)),
            bias: Param::zeros(&[c_out]),
        }
    }

    pub fn c_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn c_out(&self) -> usize {
        self.weight.shape()[1]
    }

    /// Accepts `[C_in]` or `[N, C_in]`.
    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, LinearCache)> {
        let (c_in, c_out) = (self.c_in(), self.c_out());
        let (n, batched) = match *input.shape() {
            [c] if c == c_in => (1, false),
            [n, c] if c == c_in => (n, true),
            _ => {
                return Err(Error::Shape(format!(
                    "linear {c_in}->{c_out} got input {:?}",
                    input.shape()
                )))
            }
        };
        let mut out = Vec::with_capacity(n * c_out);
        for _ in 0..n {
            out.extend_from_slice(self.bias.value.data());
        }
        gemm(n, c_in, c_out, 1.0, input.data(), false, self.weight.value.data(), false, 1.0, &mut out);
        let shape: Vec<usize> = if batched { vec![n, c_out] } else { vec![c_out] };
        Ok((
            Tensor::from_vec(&shape, out)?,
            LinearCache {
                input: input.clone(),
            },
        ))
    }

    pub fn backward(&mut self, cache: &LinearCache, grad_out: &Tensor) -> Result<Tensor> {
        let (c_in, c_out) = (self.c_in(), self.c_out());
        let n = cache.input.len() / c_in;
        if grad_out.len() != n * c_out {
            return Err(Error::Shape(format!(
                "linear grad {:?} for {n} samples of {c_out}",
                grad_out.shape()
            )));
        }
        let g = grad_out.data();
        gemm(c_in, n, c_out, 1.0, cache.input.data(), true, g, false, 1.0, self.weight.grad.data_mut());
        let gb = self.bias.grad.data_mut();
        for row in g.chunks_exact(c_out) {
            for (b, &v) in gb.iter_mut().zip(row) {
                *b += v;
            }
        }
        let mut gx = vec![0.0; n * c_in];
        gemm(n, c_out, c_in, 1.0, g, false, self.weight.value.data(), true, 0.0, &mut gx);
        Tensor::from_vec(cache.input.shape(), gx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_matmul() {
        let mut lin = Linear::new(2, 2, &mut ChaCha8Rng::seed_from_u64(0));
        lin.weight.value = Tensor::from_vec(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        let (y, _) = lin.forward(&x).unwrap();
        assert_eq!(y, x);
        lin.bias.value = Tensor::filled(&[2], 1.0);
        let (y, _) = lin.forward(&x).unwrap();
        assert_eq!(y.data(), &[2.0, 3.0]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let lin = Linear::new(3, 2, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(lin.forward(&Tensor::zeros(&[4])).is_err());
        assert!(lin.forward(&Tensor::zeros(&[5, 2])).is_err());
    }
}
