//! Fixed set of layers for spectral CNNs, each with explicit forward and
//! backward passes.
//!
//! Batched activations are laid out `[N, L, C]` (samples, spectral positions,
//! channels). Layers that accept a single sample take `[L, C]`.

mod activation;
mod batchnorm;
mod conv;
mod linear;
mod pool;
mod softmax;

pub use activation::{relu, relu_backward};
pub use batchnorm::{BatchNorm1d, BatchNormCache, Mode};
pub use conv::{conv_output_len, Conv1d, Conv1dCache};
pub use linear::{Linear, LinearCache};
pub use pool::{
    global_avg_pool, global_avg_pool_backward, pool_output_len, MaxPool1d, MaxPoolCache,
};
pub use softmax::{nll_loss, nll_loss_batch, softmax, softmax_backward, LOSS_FLOOR};

use rand::Rng;

use crate::tensor::Tensor;

/// Uniform(−1/√fan_in, 1/√fan_in) initialization.
pub(crate) fn uniform_init(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::from_vec(shape, data).expect("shape product matches")
}

/// Splits a `[N, L, C]` or `[L, C]` shape into `(N, L, C, batched)`.
pub(crate) fn batch_dims(shape: &[usize]) -> Option<(usize, usize, usize, bool)> {
    match *shape {
        [n, l, c] => Some((n, l, c, true)),
        [l, c] => Some((1, l, c, false)),
        _ => None,
    }
}
