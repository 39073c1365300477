//! Adam optimizer over named parameter maps.

use std::collections::HashMap;
use std::sync::Arc;

use crate::model::Parameters;
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> AdamConfig {
        AdamConfig { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction. Moment buffers appear lazily per parameter, so
/// parameters that receive no gradient on a step (e.g. an unused context
/// path) are simply left untouched.
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    m: HashMap<String, Vec<f64>>,
    v: HashMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Adam {
        Adam { cfg, step: 0, m: HashMap::new(), v: HashMap::new() }
    }

    pub fn lr(&self) -> f64 {
        self.cfg.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.cfg.lr = lr;
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. Writes go through `Arc::make_mut`, so snapshots
    /// holding the old tensors (checkpoints, running tapes) keep their
    /// values. Non-finite gradients abort with a divergence error.
    pub fn step(&mut self, params: &mut Parameters, grads: &[(String, Tensor)]) -> Result<()> {
        self.step += 1;
        let c1 = 1.0 - self.cfg.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.cfg.beta2.powi(self.step as i32);
        for (name, grad) in grads {
            if grad.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    step: self.step,
                    msg: format!("non-finite gradient in {:?}", name),
                });
            }
            let slot = params.get_mut(name).ok_or_else(|| {
                Error::Invalid(format!("gradient for unknown parameter {:?}", name))
            })?;
            if slot.shape() != grad.shape() {
                return Err(Error::Invalid(format!(
                    "gradient shape {:?} does not match parameter {:?} of shape {:?}",
                    grad.shape(),
                    name,
                    slot.shape()
                )));
            }
            let n = grad.numel();
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let values = Arc::make_mut(slot).data_mut();
            for i in 0..n {
                let g = grad.data()[i];
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * g;
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                values[i] -= self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
            }
        }
        Ok(())
    }
}
