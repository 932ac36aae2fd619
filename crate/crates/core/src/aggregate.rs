//! Pooling of per-crop scores into one image score.
//!
//! Each crop carries a score `s_i` and the fraction `a_i` of the image it
//! covers. Weighted strategies use `w_i(α) = a_i^α / Σ_j a_j^α`, where
//! `0^0` is taken as 1 so `α = 0` gives uniform weights.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoolError {
    #[error("invalid pooling configuration: {0}")]
    Config(String),
    #[error("invalid crop: {0}")]
    Crop(String),
}

/// Crop score with its share of the image area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredCrop {
    pub score: f64,
    pub area_fraction: f64,
}

impl ScoredCrop {
    pub fn new(score: f64, area_fraction: f64) -> Self {
        ScoredCrop { score, area_fraction }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Area-weighted mean (`α = 1`).
    AreaMean,
    /// `Σ w_i(α) s_i`.
    AreaAlphaMean,
    /// `(1 − β) s0 + β S_mean(α)` with `β = 1 − exp(−A / A0)`.
    CoverageBlend,
    /// `−τ log Σ w_i(α) exp(−s_i / τ)`.
    Softmin,
    /// Mean of the `k` lowest scores.
    BottomK,
    /// `(Σ w_i(α) max(s_i, ε)^p)^(1/p)`.
    PowerMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoTextPolicy {
    ReturnPrior,
    Exclude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoolConfig {
    pub strategy: Strategy,
    pub alpha: f64,
    pub s0: f64,
    pub a0: f64,
    pub tau: f64,
    /// Explicit bottom-k count; takes precedence over `frac`.
    pub k: Option<usize>,
    pub frac: Option<f64>,
    pub p: f64,
    pub eps: f64,
    pub no_text_policy: NoTextPolicy,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            strategy: Strategy::AreaAlphaMean,
            alpha: 0.5,
            s0: 5.0,
            a0: 0.03,
            tau: 1.0,
            k: None,
            frac: Some(0.2),
            p: -2.0,
            eps: 1e-3,
            no_text_policy: NoTextPolicy::Exclude,
        }
    }
}

impl PoolConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        PoolConfig { strategy, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), PoolError> {
        let bad = |m: String| Err(PoolError::Config(m));
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be >= 0, got {}", self.alpha));
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be > 0, got {}", self.tau));
        }
        if self.p == 0.0 || !self.p.is_finite() {
            return bad(format!("p must be finite and non-zero, got {}", self.p));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be > 0, got {}", self.eps));
        }
        if !(self.a0 > 0.0) {
            return bad(format!("a0 must be > 0, got {}", self.a0));
        }
        if !(self.s0 >= 0.0) {
            return bad(format!("s0 must be >= 0, got {}", self.s0));
        }
        if self.k == Some(0) {
            return bad("k must be >= 1".into());
        }
        if let Some(f) = self.frac {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("frac must lie in (0, 1], got {f}"));
            }
        }
        if self.strategy == Strategy::BottomK && self.k.is_none() && self.frac.is_none() {
            return bad("bottom_k needs k or frac".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum PoolOutcome {
    Score(f64),
    NoText,
}

impl PoolOutcome {
    pub fn score(self) -> Option<f64> {
        match self {
            PoolOutcome::Score(s) => Some(s),
            PoolOutcome::NoText => None,
        }
    }
}

/// Normalized weights `a_i^α / Σ a_j^α`.
pub fn area_weights(crops: &[ScoredCrop], alpha: f64) -> Vec<f64> {
    let raw: Vec<f64> =
        crops.iter().map(|c| if alpha == 0.0 { 1.0 } else { math::powf(c.area_fraction, alpha) }).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn weighted_mean(crops: &[ScoredCrop], alpha: f64) -> f64 {
    area_weights(crops, alpha).iter().zip(crops).map(|(w, c)| w * c.score).sum()
}

/// Number of crops bottom-k averages over.
pub fn bottom_k_count(n: usize, config: &PoolConfig) -> usize {
    let k = match (config.k, config.frac) {
        (Some(k), _) => k,
        (None, Some(f)) => (math::ceil(f * n as f64) as usize).max(1),
        (None, None) => 1,
    };
    k.min(n).max(1)
}

/// Overlapping detections may push the summed area fraction slightly past 1.
pub const COVERAGE_SLACK: f64 = 1e-6;

/// Image-level score from crop scores.
pub fn pool(crops: &[ScoredCrop], config: &PoolConfig) -> Result<PoolOutcome, PoolError> {
    config.validate()?;
    for c in crops {
        if !(0.0..=5.0).contains(&c.score) {
            return Err(PoolError::Crop(format!("score {} outside [0, 5]", c.score)));
        }
        if !(c.area_fraction > 0.0 && c.area_fraction <= 1.0) {
            return Err(PoolError::Crop(format!("area fraction {} outside (0, 1]", c.area_fraction)));
        }
    }
    let coverage: f64 = crops.iter().map(|c| c.area_fraction).sum();
    if coverage > 1.0 + COVERAGE_SLACK {
        return Err(PoolError::Crop(format!("crop areas sum to {coverage}, more than the image")));
    }
    if crops.is_empty() {
        return Ok(match config.no_text_policy {
            NoTextPolicy::ReturnPrior => PoolOutcome::Score(config.s0),
            NoTextPolicy::Exclude => PoolOutcome::NoText,
        });
    }
    let s = match config.strategy {
        Strategy::AreaMean => weighted_mean(crops, 1.0),
        Strategy::AreaAlphaMean => weighted_mean(crops, config.alpha),
        Strategy::CoverageBlend => {
            let beta = 1.0 - math::exp(-coverage / config.a0);
            (1.0 - beta) * config.s0 + beta * weighted_mean(crops, config.alpha)
        }
        Strategy::Softmin => {
            // Shift by the minimum so the exponentials cannot overflow.
            let m = crops.iter().map(|c| c.score).fold(f64::INFINITY, f64::min);
            let w = area_weights(crops, config.alpha);
            let acc: f64 = w.iter().zip(crops).map(|(w, c)| w * math::exp(-(c.score - m) / config.tau)).sum();
            m - config.tau * math::ln(acc)
        }
        Strategy::BottomK => {
            let mut scores: Vec<f64> = crops.iter().map(|c| c.score).collect();
            scores.sort_by(f64::total_cmp);
            let k = bottom_k_count(scores.len(), config);
            scores[..k].iter().sum::<f64>() / k as f64
        }
        Strategy::PowerMean => {
            let w = area_weights(crops, config.alpha);
            let acc: f64 = w.iter().zip(crops).map(|(w, c)| w * math::powf(c.score.max(config.eps), config.p)).sum();
            math::powf(acc, 1.0 / config.p)
        }
    };
    Ok(PoolOutcome::Score(s))
}
