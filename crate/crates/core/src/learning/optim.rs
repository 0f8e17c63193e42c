use super::OptimizerConfig;
use crate::tensor::{Checkpoint, Gradients, ParameterStore, Tensor};
use crate::{Error, Result};
use std::collections::BTreeMap;

/// Outcome of one optimizer call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateInfo {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    /// Factor the gradients were scaled by (1 when unclipped).
    pub clip_scale: f64,
    /// True when the update was skipped over a non-finite gradient.
    pub skipped: bool,
}

/// Adaptive-moment optimizer with decoupled weight decay and global norm
/// clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    cfg: OptimizerConfig,
    m: BTreeMap<String, Tensor<f32>>,
    v: BTreeMap<String, Tensor<f32>>,
    steps: u64,
}

pub const MOMENT1_PREFIX: &str = "opt.m/";
pub const MOMENT2_PREFIX: &str = "opt.v/";

impl Adam {
    pub fn new(cfg: OptimizerConfig) -> Self {
        Adam { cfg, m: BTreeMap::new(), v: BTreeMap::new(), steps: 0 }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update and bumps the store's version. Non-finite
    /// gradients leave everything untouched.
    pub fn apply(&mut self, params: &mut ParameterStore<f32>, grads: &Gradients<f32>) -> Result<UpdateInfo> {
        for name in grads.keys() {
            if !params.contains(name) {
                return Err(Error::Usage(format!("gradient for unknown parameter {name}")));
            }
        }
        let sum_sq: f64 = grads.values().map(|g| g.sum_sq()).sum();
        let norm = sum_sq.sqrt();
        if !norm.is_finite() {
            log::warn!("skipping update: non-finite gradient norm");
            return Ok(UpdateInfo { grad_norm: norm, clip_scale: 1.0, skipped: true });
        }
        let scale = if norm > self.cfg.clip_norm { self.cfg.clip_norm / norm } else { 1.0 };
        self.steps += 1;
        let c = &self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.steps as i32);
        let bc2 = 1.0 - c.beta2.powi(self.steps as i32);
        for (name, g) in grads {
            let p = params.get(name)?;
            let m = self.m.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.rows(), g.cols()));
            let v = self.v.entry(name.clone()).or_insert_with(|| Tensor::zeros(g.rows(), g.cols()));
            let mut updated = (**p).clone();
            for (((w, &gi), mi), vi) in
                updated.data_mut().iter_mut().zip(g.data()).zip(m.data_mut().iter_mut()).zip(v.data_mut().iter_mut())
            {
                let gi = gi as f64 * scale;
                let m_new = c.beta1 * *mi as f64 + (1.0 - c.beta1) * gi;
                let v_new = c.beta2 * *vi as f64 + (1.0 - c.beta2) * gi * gi;
                *mi = m_new as f32;
                *vi = v_new as f32;
                let step = (m_new / bc1) / ((v_new / bc2).sqrt() + c.eps) + c.weight_decay * *w as f64;
                *w -= (c.lr * step) as f32;
            }
            params.replace(name, updated)?;
        }
        params.set_version(params.version() + 1);
        Ok(UpdateInfo { grad_norm: norm, clip_scale: scale, skipped: false })
    }

    /// Moments as named arrays for checkpointing.
    pub fn export(&self) -> Vec<(String, Tensor<f32>)> {
        let m = self.m.iter().map(|(n, t)| (format!("{MOMENT1_PREFIX}{n}"), t.clone()));
        let v = self.v.iter().map(|(n, t)| (format!("{MOMENT2_PREFIX}{n}"), t.clone()));
        m.chain(v).collect()
    }

    /// Restores moments and the step count from a checkpoint.
    pub fn restore(cfg: OptimizerConfig, ckpt: &Checkpoint) -> Self {
        let mut opt = Adam::new(cfg);
        opt.steps = ckpt.optimizer_steps;
        for (name, t) in &ckpt.arrays {
            if let Some(n) = name.strip_prefix(MOMENT1_PREFIX) {
                opt.m.insert(n.to_string(), t.clone());
            } else if let Some(n) = name.strip_prefix(MOMENT2_PREFIX) {
                opt.v.insert(n.to_string(), t.clone());
            }
        }
        opt
    }
}
