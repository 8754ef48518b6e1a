//! ADAM with bias correction; moment state lives on each [`Param`].

use serde::{Deserialize, Serialize};

use crate::tensor::Param;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One ADAM update of `param` at step `t ≥ 1`; zeroes the gradient afterwards.
pub fn adam_step(param: &mut Param, t: u64, cfg: &AdamConfig) {
    debug_assert!(t >= 1);
    let bc1 = 1.0 - cfg.beta1.powi(t as i32);
    let bc2 = 1.0 - cfg.beta2.powi(t as i32);
    let Param { value, grad, m, v } = param;
    for (((x, g), m), v) in value
        .data_mut()
        .iter_mut()
        .zip(grad.data_mut().iter_mut())
        .zip(m.data_mut().iter_mut())
        .zip(v.data_mut().iter_mut())
    {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * *g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * *g * *g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *x -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        *g = 0.0;
    }
}

/// Step counter plus hyper-parameters.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self { config, t: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step<'a>(&mut self, params: impl IntoIterator<Item = &'a mut Param>) {
        self.t += 1;
        for p in params {
            adam_step(p, self.t, &self.config);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = Param::new(Tensor::from_vec(&[3], vec![0.5, -1.0, 2.0]).unwrap());
        let before = p.value.clone();
        let mut opt = Adam::new(AdamConfig::default());
        for _ in 0..5 {
            opt.step([&mut p]);
        }
        assert_eq!(p.value, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = Param::zeros(&[1]);
        p.grad.fill(1.0);
        let cfg = AdamConfig::default();
        adam_step(&mut p, 1, &cfg);
        let want = -cfg.lr / (1.0 + cfg.eps);
        assert!((p.value.data()[0] - want).abs() < 1e-15);
        assert_eq!(p.grad.data()[0], 0.0);
    }

    #[test]
    fn constant_gradient_step_approaches_lr() {
        let mut p = Param::zeros(&[1]);
        let mut opt = Adam::new(AdamConfig::default());
        let mut last = 0.0;
        for _ in 0..5000 {
            p.grad.fill(0.3);
            let before = p.value.data()[0];
            opt.step([&mut p]);
            last = before - p.value.data()[0];
        }
        assert!((last - 1e-3).abs() < 1e-6, "step {last}");
    }
}
