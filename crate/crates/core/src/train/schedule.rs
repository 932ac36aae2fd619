use crate::math;

use super::optim::OptimConfig;

/// Step decay: `lr · γ^⌊epoch / step⌋`, with `epoch` counted from 0 within a stage.
pub fn lr_at(epoch: usize, config: &OptimConfig) -> f64 {
    let k = epoch / config.lr_step.max(1);
    config.lr * math::powf(config.lr_gamma, k as f64)
}
