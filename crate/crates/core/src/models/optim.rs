//! SGD, classical momentum and Adam with coupled (L2) weight decay.

use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Real};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Momentum,
    Adam,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl OptimizerKind {
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Momentum => "momentum",
            OptimizerKind::Adam => "adam",
        }
    }
}

impl OptimizerConfig {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        OptimizerConfig {
            kind,
            lr,
            weight_decay: 0.0,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::Adam, lr)
    }

    pub fn with_weight_decay(mut self, wd: f64) -> Self {
        self.weight_decay = wd;
        self
    }
}

/// Per-parameter optimizer slots.
#[derive(Clone, Debug)]
pub struct OptimizerState<T> {
    pub config: OptimizerConfig,
    /// Momentum buffer, or Adam's first moment.
    first: Vec<Vec<T>>,
    /// Adam's second moment.
    second: Vec<Vec<T>>,
    step: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: OptimizerConfig, store: &ParamStore<T>) -> Self {
        let zeros = || {
            store
                .iter()
                .map(|p| vec![T::zero(); p.value.numel()])
                .collect()
        };
        let second = if config.kind == OptimizerKind::Adam {
            zeros()
        } else {
            Vec::new()
        };
        let first = if config.kind == OptimizerKind::Sgd {
            Vec::new()
        } else {
            zeros()
        };
        OptimizerState {
            config,
            first,
            second,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update of every parameter from its accumulated gradient.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        if !store.grads_ready() {
            return Err(Error::Contract(
                "optimizer step without gradients from a backward pass".into(),
            ));
        }
        self.step += 1;
        let c = self.config;
        let lr = T::from_f64_lossy(c.lr);
        let wd = T::from_f64_lossy(c.weight_decay);
        let mu = T::from_f64_lossy(c.momentum);
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let eps = T::from_f64_lossy(c.eps);
        let bc1 = T::one() - b1.powi(self.step as i32);
        let bc2 = T::one() - b2.powi(self.step as i32);
        for (pi, p) in store.iter_mut().enumerate() {
            let (w, g) = (p.value.data_mut(), p.grad.data());
            for k in 0..w.len() {
                let grad = g[k] + wd * w[k];
                let delta = match c.kind {
                    OptimizerKind::Sgd => lr * grad,
                    OptimizerKind::Momentum => {
                        let v = &mut self.first[pi][k];
                        *v = mu * *v + grad;
                        lr * *v
                    }
                    OptimizerKind::Adam => {
                        let m = &mut self.first[pi][k];
                        *m = b1 * *m + (T::one() - b1) * grad;
                        let v = &mut self.second[pi][k];
                        *v = b2 * *v + (T::one() - b2) * grad * grad;
                        let mhat = self.first[pi][k] / bc1;
                        let vhat = self.second[pi][k] / bc2;
                        lr * mhat / (vhat.sqrt() + eps)
                    }
                };
                // skipping exact zeros keeps lr = 0 bitwise inert (even for -0.0)
                if delta != T::zero() {
                    w[k] = w[k] - delta;
                }
            }
        }
        store.set_grads_ready(false);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn one_param(w: f64, g: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(w));
        s.get_mut(id).grad = Tensor::scalar(g);
        s.set_grads_ready(true);
        s
    }

    #[test]
    fn sgd_single_step() {
        let mut s = one_param(1.0, 0.5);
        let mut opt = OptimizerState::new(OptimizerConfig::new(OptimizerKind::Sgd, 0.1), &s);
        opt.step(&mut s).unwrap();
        assert!((s.flatten()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut s = one_param(0.0, 3.0);
        let mut opt = OptimizerState::new(OptimizerConfig::adam(0.001), &s);
        opt.step(&mut s).unwrap();
        // m̂ = g, v̂ = g², so the update is lr·g/(|g|+eps)
        let expect = -0.001 * 3.0 / (3.0 + 1e-8);
        assert!((s.flatten()[0] - expect).abs() < 1e-15);
        assert!((s.flatten()[0] + 0.001).abs() < 1e-10);
    }

    #[test]
    fn weight_decay_is_added_to_the_gradient() {
        let mut s = one_param(2.0, 0.5);
        let cfg = OptimizerConfig::new(OptimizerKind::Sgd, 0.1).with_weight_decay(0.001);
        let mut opt = OptimizerState::new(cfg, &s);
        opt.step(&mut s).unwrap();
        // effective gradient 0.5 + 0.001·2 = 0.502
        assert!((s.flatten()[0] - (2.0 - 0.1 * 0.502)).abs() < 1e-15);
    }

    #[test]
    fn momentum_accumulates() {
        let mut s = one_param(0.0, 1.0);
        let mut opt = OptimizerState::new(OptimizerConfig::new(OptimizerKind::Momentum, 0.1), &s);
        opt.step(&mut s).unwrap();
        s.set_grads_ready(true);
        opt.step(&mut s).unwrap();
        // v1 = 1, v2 = 1.9
        assert!((s.flatten()[0] + 0.1 * (1.0 + 1.9)).abs() < 1e-12);
        assert_eq!(opt.step_count(), 2);
    }

    #[test]
    fn zero_lr_is_bitwise_inert() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Momentum, OptimizerKind::Adam] {
            let mut s = ParamStore::new();
            let id = s.add("w", Tensor::new(vec![3], vec![-0.0, 1.25, -3.5]).unwrap());
            s.get_mut(id).grad = Tensor::new(vec![3], vec![0.0, 2.0, -1.0]).unwrap();
            s.set_grads_ready(true);
            let before: Vec<u64> = s.flatten().iter().map(|v: &f64| v.to_bits()).collect();
            let mut opt = OptimizerState::new(OptimizerConfig::new(kind, 0.0), &s);
            opt.step(&mut s).unwrap();
            let after: Vec<u64> = s.flatten().iter().map(|v| v.to_bits()).collect();
            assert_eq!(before, after, "{kind:?}");
        }
    }

    #[test]
    fn step_without_backward_is_a_contract_error() {
        let mut s = one_param(1.0, 1.0);
        s.zero_grads();
        let mut opt = OptimizerState::new(OptimizerConfig::adam(0.001), &s);
        assert!(matches!(opt.step(&mut s), Err(Error::Contract(_))));
    }
}
