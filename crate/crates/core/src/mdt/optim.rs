//! AdamW with decoupled weight decay, global-norm clipping and the
//! warmup / flat / cosine learning-rate schedule.

use std::f64::consts::PI;

use super::config::TrainConfig;
use super::model::ModelWeights;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_epochs: f64,
    pub flat_epochs: f64,
    pub total_epochs: f64,
}

impl LrSchedule {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self {
            base_lr: cfg.lr,
            warmup_epochs: cfg.warmup_epochs,
            flat_epochs: cfg.flat_epochs,
            total_epochs: cfg.total_epochs as f64,
        }
    }

    /// Learning rate at a fractional epoch position.
    pub fn lr_at(&self, epoch: f64) -> f64 {
        if epoch < self.warmup_epochs {
            return self.base_lr * epoch.max(0.0) / self.warmup_epochs;
        }
        let decay_start = self.warmup_epochs + self.flat_epochs;
        if epoch <= decay_start {
            return self.base_lr;
        }
        let span = self.total_epochs - decay_start;
        if span <= 0.0 {
            return self.base_lr;
        }
        let progress = ((epoch - decay_start) / span).clamp(0.0, 1.0);
        self.base_lr * 0.5 * (1.0 + (PI * progress).cos())
    }
}

/// Rejects non-finite gradients, naming the first offending tensor.
pub fn check_finite(grads: &ModelWeights) -> Result<()> {
    for t in grads.tensors() {
        if t.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(t.name));
        }
    }
    Ok(())
}

/// Rescales so the global L2 norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_global_norm(grads: &mut ModelWeights, max_norm: f64) -> f64 {
    let total = grads.global_norm();
    if total > max_norm {
        grads.scale(max_norm / total);
    }
    total
}

#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    m: ModelWeights,
    v: ModelWeights,
}

impl AdamW {
    pub fn new(weights: &ModelWeights, cfg: &TrainConfig) -> Self {
        Self {
            beta1: cfg.betas.0,
            beta2: cfg.betas.1,
            eps: cfg.adam_eps,
            weight_decay: cfg.weight_decay,
            step: 0,
            m: weights.zeros_like(),
            v: weights.zeros_like(),
        }
    }

    /// One update at learning rate `lr`. Gradients must already be finite and clipped.
    pub fn step(&mut self, weights: &mut ModelWeights, grads: &ModelWeights, lr: f64) -> Result<()> {
        check_finite(grads)?;
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, eps, wd) = (self.beta1, self.beta2, self.eps, self.weight_decay);
        let params = weights.tensors_mut();
        let g = grads.tensors();
        let m = self.m.tensors_mut();
        let v = self.v.tensors_mut();
        for (((p, g), m), v) in params.into_iter().zip(g).zip(m).zip(v) {
            for (((p, &g), m), v) in p.data.iter_mut().zip(g.data).zip(m.data.iter_mut()).zip(v.data.iter_mut()) {
                *p -= lr * wd * *p;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
