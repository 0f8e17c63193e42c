//! Off-policy targets, per-variant losses and the optimizer.

mod batch;
mod loss;
mod optim;
mod vtrace;

pub use batch::{Bootstrap, PaddedBatch, Sequence};
pub use loss::{build_loss, compute_gradients, entropy_reg, LossBreakdown, LossGraph};
pub use optim::{Adam, UpdateInfo, MOMENT1_PREFIX, MOMENT2_PREFIX};
pub use vtrace::{vtrace, VTraceOutputs};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub gamma: f64,
    pub rho_bar: f64,
    pub c_bar: f64,
    pub lambda_v: f64,
    pub lambda_kl: f64,
    pub lambda_reg: f64,
    pub lambda_ent: f64,
    pub aux_coeff: f64,
    /// Environment rewards are multiplied by this before V-trace.
    pub reward_scale: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma: 0.99,
            rho_bar: 1.0,
            c_bar: 1.0,
            lambda_v: 0.5,
            lambda_kl: 1.0,
            lambda_reg: 0.01,
            lambda_ent: 0.01,
            aux_coeff: 0.5,
            reward_scale: 0.01,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(crate::Error::Config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.rho_bar >= self.c_bar && self.c_bar > 0.0) {
            return Err(crate::Error::Config("need rho_bar >= c_bar > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { lr: 4e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0, clip_norm: 40.0 }
    }
}

/// One JSON-lines metrics record per learner update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub agent: String,
    pub variant: String,
    /// Learner step counter (environment steps consumed).
    pub step: u64,
    pub version: u64,
    pub grad_norm: f64,
    pub skipped: bool,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

#[cfg(test)]
pub(crate) mod tests;
