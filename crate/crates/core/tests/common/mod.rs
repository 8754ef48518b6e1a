//! Finite-difference oracle and fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specband::nn::{
    global_avg_pool, global_avg_pool_backward, nll_loss_batch, relu, relu_backward, softmax,
    softmax_backward, BatchNorm1d, Conv1d, Linear, MaxPool1d, Mode,
};
use specband::net::AttentionCnnModel;
use specband::Tensor;

pub const FD_STEP: f64 = 1e-3;

/// `‖a − n‖ / max(‖a‖, ‖n‖)`, zero when both vanish.
pub fn norm_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n) * (a - n))
        .sum::<f64>()
        .sqrt();
    let na = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let denom = na.max(nn);
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

/// Central difference of `f` with respect to `x[i]` at step `h`.
pub fn central_diff_h(x: &mut [f64], i: usize, h: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let orig = x[i];
    x[i] = orig + h;
    let plus = f(x);
    x[i] = orig - h;
    let minus = f(x);
    x[i] = orig;
    (plus - minus) / (2.0 * h)
}

/// Norm-wise relative error of `analytic` against central differences of
/// `f` over every entry of `values`.
pub fn check_tensor(analytic: &[f64], values: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    let mut x = values.to_vec();
    let numeric: Vec<f64> = (0..x.len())
        .map(|i| central_diff_h(&mut x, i, FD_STEP, &mut f))
        .collect();
    norm_rel_err(analytic, &numeric)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random values with magnitude in [0.05, 1] so ReLU kinks are not crossed
/// by the finite-difference step.
pub fn away_from_zero(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Distinct values spaced 0.01 apart, so no max-pool winner can change
/// under the finite-difference step.
pub fn distinct(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - n as f64 * 0.005).collect();
    vals.shuffle(rng);
    Tensor::from_vec(shape, vals).unwrap()
}

fn t(shape: &[usize], v: &[f64]) -> Tensor {
    Tensor::from_vec(shape, v.to_vec()).unwrap()
}

fn project(y: &Tensor, w: &Tensor) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

// Each layer check differentiates the scalar Σ w ⊙ layer(x) for random w and
// returns the worst norm-wise relative error over the input and parameters.

#[allow(clippy::too_many_arguments)]
pub fn check_conv(seed: u64, n: usize, len: usize, c_in: usize, c_out: usize, k: usize, stride: usize, padding: usize) -> f64 {
    let mut r = rng(seed);
    let mut conv = Conv1d::new(c_in, c_out, k, stride, padding, &mut r);
    conv.bias.value = away_from_zero(&[c_out], &mut r);
    let x = away_from_zero(&[n, len, c_in], &mut r);
    let (y, cache) = conv.forward(&x).unwrap();
    let w = away_from_zero(y.shape(), &mut r);
    let gx = conv.backward(&cache, &w).unwrap();
    let ks = conv.kernels.shape().to_vec();

    let ex = check_tensor(gx.data(), x.data(), |v| project(&conv.forward(&t(x.shape(), v)).unwrap().0, &w));
    let ek = check_tensor(conv.kernels.grad.data(), conv.kernels.value.data(), |v| {
        let mut c = conv.clone();
        c.kernels.value = t(&ks, v);
        project(&c.forward(&x).unwrap().0, &w)
    });
    let eb = check_tensor(conv.bias.grad.data(), conv.bias.value.data(), |v| {
        let mut c = conv.clone();
        c.bias.value = t(&[c_out], v);
        project(&c.forward(&x).unwrap().0, &w)
    });
    ex.max(ek).max(eb)
}

pub fn check_maxpool(seed: u64, n: usize, len: usize, c: usize, k: usize, stride: usize) -> f64 {
    let mut r = rng(seed);
    let pool = MaxPool1d::new(k, stride);
    let x = distinct(&[n, len, c], &mut r);
    let (y, cache) = pool.forward(&x).unwrap();
    let w = away_from_zero(y.shape(), &mut r);
    let gx = pool.backward(&cache, &w).unwrap();
    check_tensor(gx.data(), x.data(), |v| project(&pool.forward(&t(x.shape(), v)).unwrap().0, &w))
}

pub fn check_avgpool(seed: u64, n: usize, len: usize, c: usize) -> f64 {
    let mut r = rng(seed);
    let x = away_from_zero(&[n, len, c], &mut r);
    let y = global_avg_pool(&x).unwrap();
    let w = away_from_zero(y.shape(), &mut r);
    let gx = global_avg_pool_backward(&w, x.shape()).unwrap();
    check_tensor(gx.data(), x.data(), |v| project(&global_avg_pool(&t(x.shape(), v)).unwrap(), &w))
}

pub fn check_relu(seed: u64, shape: &[usize]) -> f64 {
    let mut r = rng(seed);
    let x = away_from_zero(shape, &mut r);
    let w = away_from_zero(shape, &mut r);
    let gx = relu_backward(&x, &w).unwrap();
    check_tensor(gx.data(), x.data(), |v| project(&relu(&t(shape, v)), &w))
}

pub fn check_batchnorm(seed: u64, n: usize, len: usize, c: usize, mode: Mode) -> f64 {
    let mut r = rng(seed);
    let mut bn = BatchNorm1d::new(c);
    bn.gamma.value = away_from_zero(&[c], &mut r);
    bn.beta.value = away_from_zero(&[c], &mut r);
    bn.running_mean = away_from_zero(&[c], &mut r).into_data();
    bn.running_var = (0..c).map(|_| r.random_range(0.5..2.0)).collect();
    let x = away_from_zero(&[n, len, c], &mut r);
    let (y, cache) = bn.forward_stateless(&x, mode).unwrap();
    let w = away_from_zero(y.shape(), &mut r);
    let gx = bn.backward(&cache, &w).unwrap();

    let eval = |b: &BatchNorm1d, x: &Tensor| project(&b.forward_stateless(x, mode).unwrap().0, &w);
    let ex = check_tensor(gx.data(), x.data(), |v| eval(&bn, &t(x.shape(), v)));
    let eg = check_tensor(bn.gamma.grad.data(), bn.gamma.value.data(), |v| {
        let mut b = bn.clone();
        b.gamma.value = t(&[c], v);
        eval(&b, &x)
    });
    let eb = check_tensor(bn.beta.grad.data(), bn.beta.value.data(), |v| {
        let mut b = bn.clone();
        b.beta.value = t(&[c], v);
        eval(&b, &x)
    });
    ex.max(eg).max(eb)
}

pub fn check_linear(seed: u64, n: usize, c_in: usize, c_out: usize) -> f64 {
    let mut r = rng(seed);
    let mut lin = Linear::new(c_in, c_out, &mut r);
    lin.bias.value = away_from_zero(&[c_out], &mut r);
    let x = away_from_zero(&[n, c_in], &mut r);
    let (y, cache) = lin.forward(&x).unwrap();
    let w = away_from_zero(y.shape(), &mut r);
    let gx = lin.backward(&cache, &w).unwrap();
    let ex = check_tensor(gx.data(), x.data(), |v| project(&lin.forward(&t(x.shape(), v)).unwrap().0, &w));
    let ew = check_tensor(lin.weight.grad.data(), lin.weight.value.data(), |v| {
        let mut l = lin.clone();
        l.weight.value = t(&[c_in, c_out], v);
        project(&l.forward(&x).unwrap().0, &w)
    });
    let eb = check_tensor(lin.bias.grad.data(), lin.bias.value.data(), |v| {
        let mut l = lin.clone();
        l.bias.value = t(&[c_out], v);
        project(&l.forward(&x).unwrap().0, &w)
    });
    ex.max(ew).max(eb)
}

pub fn check_softmax(seed: u64, n: usize, c: usize) -> f64 {
    let mut r = rng(seed);
    let x = away_from_zero(&[n, c], &mut r);
    let p = softmax(&x);
    let w = away_from_zero(&[n, c], &mut r);
    let gx = softmax_backward(&p, &w).unwrap();
    check_tensor(gx.data(), x.data(), |v| project(&softmax(&t(&[n, c], v)), &w))
}

/// Full-network gradient check of the mean NLL in train mode.
///
/// Entries whose ±step perturbation changes any ReLU state or max-pool
/// winner straddle a kink where the central difference is not a derivative
/// estimate; they are counted and left out. Returns the worst norm-wise
/// relative error over parameter tensors and the input, and the fraction
/// of entries left out.
pub struct NetCheck {
    pub worst: f64,
    pub worst_param: String,
    pub skipped_fraction: f64,
}

pub fn check_network(model: &AttentionCnnModel, x: &Tensor, labels: &[usize], max_entries: usize) -> NetCheck {
    let mut model = model.clone();
    model.zero_grad();
    let (rec, tape) = model.forward_with_tape(x, Mode::Train).unwrap();
    let base_pattern = tape.activation_pattern();
    let (_, grad) = nll_loss_batch(&rec.output, labels).unwrap();
    let grad_x = model.backward(&rec, &tape, &grad).unwrap();

    let eval = |m: &AttentionCnnModel, x: &Tensor| -> Option<f64> {
        let (rec, tape) = m.forward_with_tape(x, Mode::Train).unwrap();
        if tape.activation_pattern() != base_pattern {
            return None;
        }
        Some(nll_loss_batch(&rec.output, labels).unwrap().0)
    };

    let mut worst = 0.0f64;
    let mut worst_param = String::new();
    let (mut skipped, mut total) = (0usize, 0usize);
    let mut record = |name: &str, a: &[f64], n: &[f64], worst: &mut f64| {
        let e = norm_rel_err(a, n);
        if e > *worst {
            *worst = e;
            worst_param = name.to_string();
        }
    };

    let count = model.params().len();
    for pi in 0..count {
        let (name, p) = {
            let (n, p) = &model.params()[pi];
            (n.clone(), (*p).clone())
        };
        let step = (p.value.len() / max_entries).max(1);
        let (mut ana, mut num) = (Vec::new(), Vec::new());
        for i in (0..p.value.len()).step_by(step) {
            total += 1;
            let mut plus = model.clone();
            plus.params_mut()[pi].value.data_mut()[i] += FD_STEP;
            let mut minus = model.clone();
            minus.params_mut()[pi].value.data_mut()[i] -= FD_STEP;
            match (eval(&plus, x), eval(&minus, x)) {
                (Some(lp), Some(lm)) => {
                    ana.push(p.grad.data()[i]);
                    num.push((lp - lm) / (2.0 * FD_STEP));
                }
                _ => skipped += 1,
            }
        }
        record(&name, &ana, &num, &mut worst);
    }

    let (mut ana, mut num) = (Vec::new(), Vec::new());
    for i in 0..x.len() {
        total += 1;
        let mut xp = x.clone();
        xp.data_mut()[i] += FD_STEP;
        let mut xm = x.clone();
        xm.data_mut()[i] -= FD_STEP;
        match (eval(&model, &xp), eval(&model, &xm)) {
            (Some(lp), Some(lm)) => {
                ana.push(grad_x.data()[i]);
                num.push((lp - lm) / (2.0 * FD_STEP));
            }
            _ => skipped += 1,
        }
    }
    record("input", &ana, &num, &mut worst);

    NetCheck {
        worst,
        worst_param,
        skipped_fraction: skipped as f64 / total as f64,
    }
}

pub mod oracles;
