use super::batch_dims;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Output length of max pooling: ⌊(L − k)/s⌋ + 1. Rejects `L < k`.
pub fn pool_output_len(len: usize, k: usize, stride: usize) -> Result<usize> {
    if k == 0 || stride == 0 {
        return Err(Error::InvalidArgument(format!(
            "pool window {k} and stride {stride} must be positive"
        )));
    }
    if len < k {
        return Err(Error::TooShort {
            stage: format!("maxpool1d(k={k}, s={stride})"),
            length: len,
            required: k,
        });
    }
    Ok((len - k) / stride + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool1d {
    pub k: usize,
    pub stride: usize,
}

/// Flat input index of each pooled maximum.
#[derive(Debug, Clone)]
pub struct MaxPoolCache {
    pub argmax: Vec<usize>,
    input_shape: Vec<usize>,
}

impl MaxPool1d {
    pub fn new(k: usize, stride: usize) -> Self {
        Self { k, stride }
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, MaxPoolCache)> {
        let (n, len, c, batched) = batch_dims(input.shape())
            .ok_or_else(|| Error::Shape(format!("maxpool1d input {:?}", input.shape())))?;
        let len_out = pool_output_len(len, self.k, self.stride)?;
        let x = input.data();
        let mut out = Vec::with_capacity(n * len_out * c);
        let mut argmax = Vec::with_capacity(n * len_out * c);
        for s in 0..n {
            for i in 0..len_out {
                let start = s * len * c + i * self.stride * c;
                for ch in 0..c {
                    let mut best = start + ch;
                    for j in 1..self.k {
                        let idx = start + j * c + ch;
                        // strict comparison keeps the lowest index on ties
                        if x[idx] > x[best] {
                            best = idx;
                        }
                    }
                    out.push(x[best]);
                    argmax.push(best);
                }
            }
        }
        let shape: Vec<usize> = if batched {
            vec![n, len_out, c]
        } else {
            vec![len_out, c]
        };
        Ok((
            Tensor::from_vec(&shape, out)?,
            MaxPoolCache {
                argmax,
                input_shape: input.shape().to_vec(),
            },
        ))
    }

    pub fn backward(&self, cache: &MaxPoolCache, grad_out: &Tensor) -> Result<Tensor> {
        if grad_out.len() != cache.argmax.len() {
            return Err(Error::Shape(format!(
                "maxpool1d grad has {} values for {} outputs",
                grad_out.len(),
                cache.argmax.len()
            )));
        }
        let mut gx = Tensor::zeros(&cache.input_shape);
        let g = gx.data_mut();
        for (&idx, &v) in cache.argmax.iter().zip(grad_out.data()) {
            g[idx] += v;
        }
        Ok(gx)
    }
}

/// Mean over the spectral axis: `[N, L, C] → [N, C]` or `[L, C] → [C]`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let (n, len, c, batched) = batch_dims(input.shape())
        .ok_or_else(|| Error::Shape(format!("avgpool input {:?}", input.shape())))?;
    if len == 0 {
        return Err(Error::Shape("avgpool over empty axis".into()));
    }
    let x = input.data();
    let scale = 1.0 / len as f64;
    let mut out = vec![0.0; n * c];
    for s in 0..n {
        let dst = &mut out[s * c..(s + 1) * c];
        for i in 0..len {
            let src = &x[(s * len + i) * c..(s * len + i + 1) * c];
            for (d, &v) in dst.iter_mut().zip(src) {
                *d += v;
            }
        }
        dst.iter_mut().for_each(|d| *d *= scale);
    }
    let shape: Vec<usize> = if batched { vec![n, c] } else { vec![c] };
    Tensor::from_vec(&shape, out)
}

/// Spreads each pooled gradient uniformly (1/L) back over the spectral axis.
pub fn global_avg_pool_backward(grad_out: &Tensor, input_shape: &[usize]) -> Result<Tensor> {
    let (n, len, c, _) = batch_dims(input_shape)
        .ok_or_else(|| Error::Shape(format!("avgpool input {input_shape:?}")))?;
    if grad_out.len() != n * c {
        return Err(Error::Shape(format!(
            "avgpool grad {:?} for input {input_shape:?}",
            grad_out.shape()
        )));
    }
    let scale = 1.0 / len as f64;
    let g = grad_out.data();
    let mut gx = Vec::with_capacity(n * len * c);
    for s in 0..n {
        for _ in 0..len {
            gx.extend(g[s * c..(s + 1) * c].iter().map(|v| v * scale));
        }
    }
    Tensor::from_vec(input_shape, gx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_maxima() {
        let x = Tensor::from_vec(&[6, 1], vec![1.0, 2.0, 1.0, 0.0, 3.0, 1.0]).unwrap();
        let (y, _) = MaxPool1d::new(3, 3).forward(&x).unwrap();
        assert_eq!(y.data(), &[2.0, 3.0]);
    }

    #[test]
    fn ties_route_gradient_to_first_index() {
        let x = Tensor::filled(&[6, 2], 4.0);
        let pool = MaxPool1d::new(2, 2);
        let (y, cache) = pool.forward(&x).unwrap();
        assert_eq!(y.data(), &[4.0; 6]);
        let gx = pool.backward(&cache, &Tensor::filled(&[3, 2], 1.0)).unwrap();
        assert_eq!(
            gx.data(),
            &[1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]
        );
    }

    #[test]
    fn table_size_law() {
        for b in [103usize, 204, 2, 3, 17] {
            assert_eq!(pool_output_len(b, 2, 2).unwrap(), (b - 2) / 2 + 1);
        }
        assert!(pool_output_len(1, 2, 2).is_err());
    }

    #[test]
    fn average_pooling() {
        let ones = Tensor::filled(&[4, 2], 1.0);
        assert_eq!(global_avg_pool(&ones).unwrap().data(), &[1.0, 1.0]);
        let x = Tensor::from_vec(&[2, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(global_avg_pool(&x).unwrap().data(), &[3.0, 5.0]);
        let row = Tensor::from_vec(&[1, 3], vec![1.0, -2.0, 9.0]).unwrap();
        assert_eq!(global_avg_pool(&row).unwrap().data(), row.data());
        let g = global_avg_pool_backward(&Tensor::filled(&[2], 1.0), &[4, 2]).unwrap();
        assert_eq!(g.data(), &[0.25; 8]);
    }
}
