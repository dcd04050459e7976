//! Adam with decoupled weight decay and global-norm clipping.

use serde::{Deserialize, Serialize};

use crate::params::{Gradients, ParamGroup, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Gradients are rescaled so their global L2 norm is at most this; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01, clip_norm: Some(1.0) }
    }
}

#[derive(Debug, Clone)]
pub struct AdamW<T> {
    config: AdamWConfig,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    step: u64,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(config: AdamWConfig, store: &ParamStore<T>) -> Self {
        let zeros = || store.iter().map(|(_, p)| Tensor::zeros(p.value.rows(), p.value.cols())).collect();
        Self { m: zeros(), v: zeros(), config, step: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update with a learning rate per parameter group. Missing gradients
    /// count as zero. Returns the gradient norm before clipping.
    pub fn step(&mut self, store: &mut ParamStore<T>, grads: &Gradients<T>, lr: impl Fn(ParamGroup) -> f64) -> T {
        self.step += 1;
        let norm = grads.global_norm();
        let clip = match self.config.clip_norm {
            Some(max) if norm.to_f64_lossy() > max => T::from_f64_lossy(max) / norm,
            _ => T::one(),
        };
        let c = &self.config;
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let (one, eps) = (T::one(), T::from_f64_lossy(c.eps));
        let t = self.step as i32;
        let bias1 = one - b1.powi(t);
        let bias2 = one - b2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let i = id.index();
            let (group, decay) = {
                let p = store.param(id);
                (p.group, p.decay)
            };
            let lr_t = T::from_f64_lossy(lr(group));
            let g = grads.get(id);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let value = store.get_mut(id);
            let wd = if decay { lr_t * T::from_f64_lossy(c.weight_decay) } else { T::zero() };
            for k in 0..value.len() {
                let gk = g.map_or(T::zero(), |g| g.data()[k] * clip);
                let mk = b1 * m.data()[k] + (one - b1) * gk;
                let vk = b2 * v.data()[k] + (one - b2) * gk * gk;
                m.data_mut()[k] = mk;
                v.data_mut()[k] = vk;
                let x = value.data()[k];
                let update = (mk / bias1) / ((vk / bias2).sqrt() + eps);
                value.data_mut()[k] = x - wd * x - lr_t * update;
            }
        }
        norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamId;

    fn store(x: f64) -> (ParamStore<f64>, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("x", Tensor::filled(1, 1, x), ParamGroup::Head, false);
        (s, id)
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut s, id) = store(1.0);
        let mut opt = AdamW::new(AdamWConfig { clip_norm: None, ..AdamWConfig::default() }, &s);
        let mut g = Gradients::zeros_like(&s);
        g.accumulate(id, &Tensor::filled(1, 1, 0.5));
        opt.step(&mut s, &g, |_| 0.1);
        assert!((s.get(id).data()[0] - 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let (mut s, id) = store(3.0);
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        for _ in 0..2000 {
            let x = s.get(id).data()[0];
            let mut g = Gradients::zeros_like(&s);
            g.accumulate(id, &Tensor::filled(1, 1, 2.0 * (x - 1.0)));
            opt.step(&mut s, &g, |_| 0.01);
        }
        assert!((s.get(id).data()[0] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn clipping_reports_raw_norm_and_zero_gradient_keeps_still() {
        let (mut s, id) = store(0.0);
        let mut opt = AdamW::new(AdamWConfig::default(), &s);
        let mut g = Gradients::zeros_like(&s);
        g.accumulate(id, &Tensor::filled(1, 1, 10.0));
        assert_eq!(opt.step(&mut s, &g, |_| 0.1), 10.0);
        let (mut s2, _) = store(2.0);
        let mut opt2 = AdamW::new(AdamWConfig::default(), &s2);
        let zero = Gradients::zeros_like(&s2);
        opt2.step(&mut s2, &zero, |_| 0.1);
        assert_eq!(s2.get(id).data()[0], 2.0);
    }
}
