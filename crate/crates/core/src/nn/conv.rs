use rand::Rng;

use super::{batch_dims, uniform_init};
use crate::error::{Error, Result};
use crate::tensor::{gemm, Param, Tensor};

/// Output length of a 1-D convolution: ⌊(L − k + 2p)/s⌋ + 1.
pub fn conv_output_len(len: usize, k: usize, stride: usize, padding: usize) -> Result<usize> {
    if k == 0 || stride == 0 {
        return Err(Error::InvalidArgument(format!(
            "kernel size {k} and stride {stride} must be positive"
        )));
    }
    let padded = len + 2 * padding;
    if len == 0 || padded < k {
        return Err(Error::TooShort {
            stage: format!("conv1d(k={k}, s={stride}, p={padding})"),
            length: len,
            required: k.saturating_sub(2 * padding).max(1),
        });
    }
    Ok((padded - k) / stride + 1)
}

/// 1-D convolution (cross-correlation) with zero padding.
///
/// Kernels are stored `[C_out, C_in, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub kernels: Param,
    pub bias: Param,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Debug, Clone)]
pub struct Conv1dCache {
    cols: Vec<f64>,
    n: usize,
    len_in: usize,
    len_out: usize,
    batched: bool,
}

impl Conv1d {
    pub fn new(
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            kernels: Param::new(uniform_init(&[c_out, c_in, k], c_in * k, rng)),
            bias: Param::zeros(&[c_out]),
            stride,
            padding,
        }
    }

    pub fn c_out(&self) -> usize {
        self.kernels.shape()[0]
    }

    pub fn c_in(&self) -> usize {
        self.kernels.shape()[1]
    }

    pub fn k(&self) -> usize {
        self.kernels.shape()[2]
    }

    /// Kernels rearranged to a `[k·C_in, C_out]` matrix matching the im2col
    /// column order `j·C_in + c`.
    fn weight_matrix(&self) -> Vec<f64> {
        let (c_out, c_in, k) = (self.c_out(), self.c_in(), self.k());
        let kern = self.kernels.value.data();
        let mut w = vec![0.0; k * c_in * c_out];
        for o in 0..c_out {
            for c in 0..c_in {
                for j in 0..k {
                    w[(j * c_in + c) * c_out + o] = kern[(o * c_in + c) * k + j];
                }
            }
        }
        w
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, Conv1dCache)> {
        let (n, len_in, c_in, batched) = batch_dims(input.shape())
            .ok_or_else(|| Error::Shape(format!("conv1d input {:?}", input.shape())))?;
        if c_in != self.c_in() {
            return Err(Error::Shape(format!(
                "conv1d expects {} input channels, got {c_in}",
                self.c_in()
            )));
        }
        let (k, c_out) = (self.k(), self.c_out());
        let len_out = conv_output_len(len_in, k, self.stride, self.padding)?;
        let width = k * c_in;
        let rows = n * len_out;

        let x = input.data();
        let mut cols = vec![0.0; rows * width];
        for s in 0..n {
            for i in 0..len_out {
                let row = &mut cols[(s * len_out + i) * width..(s * len_out + i + 1) * width];
                for j in 0..k {
                    let pos = (i * self.stride + j) as isize - self.padding as isize;
                    if pos < 0 || pos as usize >= len_in {
                        continue;
                    }
                    let src = (s * len_in + pos as usize) * c_in;
                    row[j * c_in..(j + 1) * c_in].copy_from_slice(&x[src..src + c_in]);
                }
            }
        }

        let mut out = Vec::with_capacity(rows * c_out);
        let bias = self.bias.value.data();
        for _ in 0..rows {
            out.extend_from_slice(bias);
        }
        gemm(rows, width, c_out, 1.0, &cols, false, &self.weight_matrix(), false, 1.0, &mut out);

        let shape: Vec<usize> = if batched {
            vec![n, len_out, c_out]
        } else {
            vec![len_out, c_out]
        };
        let cache = Conv1dCache {
            cols,
            n,
            len_in,
            len_out,
            batched,
        };
        Ok((Tensor::from_vec(&shape, out)?, cache))
    }

    /// Accumulates kernel and bias gradients; returns the input gradient.
    pub fn backward(&mut self, cache: &Conv1dCache, grad_out: &Tensor) -> Result<Tensor> {
        let (k, c_in, c_out) = (self.k(), self.c_in(), self.c_out());
        let (n, len_in, len_out) = (cache.n, cache.len_in, cache.len_out);
        let rows = n * len_out;
        let width = k * c_in;
        if grad_out.len() != rows * c_out {
            return Err(Error::Shape(format!(
                "conv1d grad {:?} for output {n}x{len_out}x{c_out}",
                grad_out.shape()
            )));
        }
        let g = grad_out.data();

        let mut grad_w = vec![0.0; width * c_out];
        gemm(width, rows, c_out, 1.0, &cache.cols, true, g, false, 0.0, &mut grad_w);
        let gk = self.kernels.grad.data_mut();
        for o in 0..c_out {
            for c in 0..c_in {
                for j in 0..k {
                    gk[(o * c_in + c) * k + j] += grad_w[(j * c_in + c) * c_out + o];
                }
            }
        }
        let gb = self.bias.grad.data_mut();
        for r in 0..rows {
            for (b, &v) in gb.iter_mut().zip(&g[r * c_out..(r + 1) * c_out]) {
                *b += v;
            }
        }

        let mut grad_cols = vec![0.0; rows * width];
        gemm(rows, c_out, width, 1.0, g, false, &self.weight_matrix(), true, 0.0, &mut grad_cols);
        let mut gx = vec![0.0; n * len_in * c_in];
        for s in 0..n {
            for i in 0..len_out {
                let row = &grad_cols[(s * len_out + i) * width..(s * len_out + i + 1) * width];
                for j in 0..k {
                    let pos = (i * self.stride + j) as isize - self.padding as isize;
                    if pos < 0 || pos as usize >= len_in {
                        continue;
                    }
                    let dst = (s * len_in + pos as usize) * c_in;
                    for (d, &v) in gx[dst..dst + c_in].iter_mut().zip(&row[j * c_in..(j + 1) * c_in]) {
                        *d += v;
                    }
                }
            }
        }
        let shape: Vec<usize> = if cache.batched {
            vec![n, len_in, c_in]
        } else {
            vec![len_in, c_in]
        };
        Tensor::from_vec(&shape, gx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(c_in: usize, c_out: usize, k: usize, stride: usize, padding: usize) -> Conv1d {
        Conv1d::new(c_in, c_out, k, stride, padding, &mut ChaCha8Rng::seed_from_u64(1))
    }

    #[test]
    fn size_law() {
        assert_eq!(conv_output_len(100, 3, 3, 0).unwrap(), 33);
        assert_eq!(conv_output_len(204, 5, 1, 2).unwrap(), 204);
        assert_eq!(conv_output_len(103, 5, 1, 2).unwrap(), 103);
        assert!(conv_output_len(2, 5, 1, 0).is_err());
        assert!(conv_output_len(0, 1, 1, 0).is_err());
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut conv = layer(1, 1, 1, 1, 0);
        conv.kernels.value.fill(1.0);
        let x = Tensor::from_vec(&[4, 1], vec![1.0, -2.0, 3.5, 0.25]).unwrap();
        let (y, _) = conv.forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn matches_direct_definition() {
        let conv = layer(2, 3, 3, 2, 1);
        let x = Tensor::from_vec(&[2, 7, 2], (0..28).map(|v| (v as f64 * 0.37).sin()).collect())
            .unwrap();
        let (y, _) = conv.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 4, 3]);
        let kern = conv.kernels.value.data();
        for s in 0..2 {
            for i in 0..4 {
                for o in 0..3 {
                    let mut want = 0.0;
                    for c in 0..2 {
                        for j in 0..3 {
                            let pos = (i * 2 + j) as isize - 1;
                            if (0..7).contains(&pos) {
                                want += x.data()[(s * 7 + pos as usize) * 2 + c]
                                    * kern[(o * 2 + c) * 3 + j];
                            }
                        }
                    }
                    let got = y.data()[(s * 4 + i) * 3 + o];
                    assert!((got - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn rejects_channel_mismatch_and_short_input() {
        let conv = layer(2, 1, 5, 1, 0);
        assert!(conv.forward(&Tensor::zeros(&[8, 3])).is_err());
        assert!(matches!(
            conv.forward(&Tensor::zeros(&[3, 2])),
            Err(Error::TooShort { .. })
        ));
    }
}
