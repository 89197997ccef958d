//! AdamW with decoupled weight decay and a warmup–cosine schedule.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::vit::ParamStore;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.01,
            eps: 1e-8,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let betas = (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2);
        if !(self.lr > 0.0 && self.eps > 0.0 && self.weight_decay >= 0.0 && betas) {
            return Err(invalid(format!("bad optimizer settings {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScheduleConfig {
    pub warmup_frac: f64,
    pub min_lr: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            warmup_frac: 0.05,
            min_lr: 1e-6,
        }
    }
}

/// Linear warmup to `peak` over `⌈warmup_frac·total⌉` steps, then cosine
/// decay to `min_lr` at the last step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WarmupCosine {
    pub peak: f64,
    pub min_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl WarmupCosine {
    pub fn new(peak: f64, schedule: &ScheduleConfig, total_steps: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&schedule.warmup_frac) || schedule.min_lr < 0.0 || schedule.min_lr > peak {
            return Err(invalid(format!("bad schedule {schedule:?} for peak lr {peak}")));
        }
        Ok(Self {
            peak,
            min_lr: schedule.min_lr,
            warmup_steps: (schedule.warmup_frac * total_steps as f64).ceil() as usize,
            total_steps: total_steps.max(1),
        })
    }

    /// Learning rate for 0-based `step`.
    pub fn lr(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.peak * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1);
        let progress = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        self.min_lr + 0.5 * (self.peak - self.min_lr) * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

/// Weight matrices are decayed; biases, LayerNorm parameters, the CLS token
/// and positional table are not.
pub fn decays(name: &str) -> bool {
    name.ends_with(".weight")
}

#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    decay: Vec<bool>,
    t: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ParamStore) -> Self {
        Self {
            config,
            m: params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect(),
            v: params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect(),
            decay: params.iter().map(|(n, _)| decays(n)).collect(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update from the gradients held in `params`.
    pub fn step(&mut self, params: &mut ParamStore, lr: f64) {
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (i, tensor) in params.tensors_mut().enumerate() {
            let grad = tensor.grad().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; tensor.numel()]);
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let decay = if self.decay[i] { lr * c.weight_decay } else { 0.0 };
            for (k, w) in tensor.data_mut().iter_mut().enumerate() {
                let g = grad[k];
                m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g;
                v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g * g;
                let update = (m[k] / bc1) / ((v[k] / bc2).sqrt() + c.eps);
                *w -= lr * update + decay * *w;
            }
        }
    }
}
