//! AdamW with decoupled weight decay.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::net::ModelParams;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimError {
    #[error("invalid optimizer configuration: {0}")]
    Config(String),
    #[error("non-finite gradient in {param:?} at index {index}")]
    NonFiniteGradient { param: String, index: usize },
    #[error("gradient or state layout does not match the parameters: {0}")]
    Layout(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs_pretrain: usize,
    pub epochs_finetune: usize,
    /// Epochs between learning-rate decays.
    pub lr_step: usize,
    pub lr_gamma: f64,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        OptimConfig {
            lr: 1e-4,
            weight_decay: 0.5,
            batch_size: 4,
            epochs_pretrain: 20,
            epochs_finetune: 20,
            lr_step: 5,
            lr_gamma: 0.5,
            seed: 42,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        let bad = |m: String| Err(OptimError::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.batch_size == 0 || self.lr_step == 0 {
            return bad("batch_size and lr_step must be positive".into());
        }
        if !(self.lr_gamma > 0.0 && self.lr_gamma <= 1.0) {
            return bad(format!("lr_gamma must lie in (0, 1], got {}", self.lr_gamma));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return bad(format!("betas must lie in [0, 1), got ({}, {})", self.beta1, self.beta2));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        Ok(())
    }
}

/// First and second moments per parameter tensor plus the step counter.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn for_params(params: &ModelParams) -> Self {
        let zeros = || params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect::<Vec<_>>();
        AdamState { step: 0, m: zeros(), v: zeros() }
    }
}

/// Whether a tensor of this rank receives weight decay. Norm scales and
/// shifts and all biases are one-dimensional and are left alone.
pub fn decays(ndim: usize) -> bool {
    ndim >= 2
}

/// One AdamW update of a single tensor at 1-based step `t`.
///
/// Decay is applied first and separately: `p ← p − lr·wd·p`, then the
/// bias-corrected Adam step.
#[allow(clippy::too_many_arguments)]
pub fn adamw_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    weight_decay: f64,
    config: &OptimConfig,
) {
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - math::powf(b1, t as f64);
    let c2 = 1.0 - math::powf(b2, t as f64);
    for i in 0..param.len() {
        param[i] -= lr * weight_decay * param[i];
        m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        param[i] -= lr * mh / (math::sqrt(vh) + config.eps);
    }
}

/// Applies one AdamW step to every parameter. Nothing is modified when any
/// gradient entry is non-finite.
pub fn adamw_step(
    params: &mut ModelParams,
    grads: &[Vec<f64>],
    state: &mut AdamState,
    config: &OptimConfig,
    lr: f64,
) -> Result<(), OptimError> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len() {
        return Err(OptimError::Layout(format!(
            "{} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.len() != params.tensor_at(i).numel() {
            return Err(OptimError::Layout(format!("gradient {} has {} entries", params.name_at(i), g.len())));
        }
        if let Some(j) = g.iter().position(|x| !x.is_finite()) {
            return Err(OptimError::NonFiniteGradient { param: params.name_at(i).into(), index: j });
        }
    }
    state.step += 1;
    for (i, g) in grads.iter().enumerate() {
        let t = params.tensor_at_mut(i);
        let wd = if decays(t.ndim()) { config.weight_decay } else { 0.0 };
        adamw_update(t.data_mut(), g, &mut state.m[i], &mut state.v[i], state.step, lr, wd, config);
    }
    Ok(())
}
