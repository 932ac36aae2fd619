//! Regression and pairwise ranking losses on plain slices.
//!
//! The tape operations [`Tape::mse_loss`](crate::Tape::mse_loss) and
//! [`Tape::rank_loss`](crate::Tape::rank_loss) evaluate exactly these
//! functions and differentiate them with the `*_grad` companions.

use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LossError {
    #[error("prediction and target lengths differ ({pred} vs {target})")]
    LengthMismatch { pred: usize, target: usize },
    #[error("{loss} needs at least {min} elements, got {got}")]
    TooShort { loss: &'static str, min: usize, got: usize },
    #[error("alpha {0} outside [0, 1]")]
    Alpha(f64),
}

/// Weighting between the regression and ranking terms:
/// `alpha · mse + (1 − alpha) · rank`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub alpha: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { alpha: 0.5 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if (0.0..=1.0).contains(&self.alpha) {
            Ok(())
        } else {
            Err(LossError::Alpha(self.alpha))
        }
    }

    pub fn combine(&self, mse: f64, rank: f64) -> f64 {
        self.alpha * mse + (1.0 - self.alpha) * rank
    }
}

fn check(pred: &[f64], target: &[f64], loss: &'static str, min: usize) -> Result<(), LossError> {
    if pred.len() != target.len() {
        return Err(LossError::LengthMismatch { pred: pred.len(), target: target.len() });
    }
    if pred.len() < min {
        return Err(LossError::TooShort { loss, min, got: pred.len() });
    }
    Ok(())
}

/// Mean of squared differences.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<f64, LossError> {
    check(pred, target, "mse_loss", 1)?;
    Ok(pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / pred.len() as f64)
}

pub(crate) fn mse_loss_grad(pred: &[f64], target: &[f64], upstream: f64, out: &mut [f64]) {
    let scale = 2.0 * upstream / pred.len() as f64;
    for ((o, p), t) in out.iter_mut().zip(pred).zip(target) {
        *o += scale * (p - t);
    }
}

/// Value of the ranking loss plus a flag set when every target pair was tied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankLoss {
    pub value: f64,
    pub pairs: usize,
    pub all_tied: bool,
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean over non-tied pairs `i < j` of `softplus(−sign(y_i − y_j)(ŷ_i − ŷ_j))`.
///
/// Pairs with equal targets are left out of both the sum and the pair count.
/// When every pair is tied the loss is 0 and `all_tied` is set.
pub fn rank_loss(pred: &[f64], target: &[f64]) -> Result<RankLoss, LossError> {
    check(pred, target, "rank_loss", 2)?;
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..pred.len() {
        for j in i + 1..pred.len() {
            let s = sign(target[i] - target[j]);
            if s == 0.0 {
                continue;
            }
            sum += math::softplus(-s * (pred[i] - pred[j]));
            pairs += 1;
        }
    }
    Ok(if pairs == 0 {
        RankLoss { value: 0.0, pairs: 0, all_tied: true }
    } else {
        RankLoss { value: sum / pairs as f64, pairs, all_tied: false }
    })
}

pub(crate) fn rank_loss_grad(pred: &[f64], target: &[f64], upstream: f64, out: &mut [f64]) {
    let n = pred.len();
    let pairs = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| target[i] != target[j])
        .count();
    if pairs == 0 {
        return;
    }
    let scale = upstream / pairs as f64;
    for i in 0..n {
        for j in i + 1..n {
            let s = sign(target[i] - target[j]);
            if s == 0.0 {
                continue;
            }
            // d/dŷ_i softplus(−s(ŷ_i − ŷ_j)) = −s·σ(−s(ŷ_i − ŷ_j))
            let d = -s * math::sigmoid(-s * (pred[i] - pred[j])) * scale;
            out[i] += d;
            out[j] -= d;
        }
    }
}

/// `alpha · mse + (1 − alpha) · rank` together with its parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub mse: f64,
    pub rank: f64,
}

pub fn total_loss(pred: &[f64], target: &[f64], config: &LossConfig) -> Result<LossBreakdown, LossError> {
    config.validate()?;
    let mse = mse_loss(pred, target)?;
    let rank = if pred.len() >= 2 { rank_loss(pred, target)?.value } else { 0.0 };
    Ok(LossBreakdown { total: config.combine(mse, rank), mse, rank })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse_loss(&[0.0, 0.0], &[1.0, 3.0]).unwrap(), 5.0);
        assert!(matches!(mse_loss(&[], &[]), Err(LossError::TooShort { .. })));
        assert!(matches!(mse_loss(&[1.0], &[1.0, 2.0]), Err(LossError::LengthMismatch { .. })));
    }

    #[test]
    fn rank_tied_prediction_is_ln2() {
        let r = rank_loss(&[0.7, 0.7], &[1.0, 2.0]).unwrap();
        assert!((r.value - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn rank_reversed_example() {
        // softplus(1) + softplus(1) + softplus(2), averaged
        let sp1 = (1.0f64 + 1.0f64.exp()).ln();
        let sp2 = (1.0f64 + 2.0f64.exp()).ln();
        let expected = (2.0 * sp1 + sp2) / 3.0;
        let r = rank_loss(&[3.0, 2.0, 1.0], &[1.0, 2.0, 3.0]).unwrap();
        assert!((r.value - expected).abs() < 1e-12);
        assert!((r.value - 1.584_484).abs() < 1e-6);
    }

    #[test]
    fn rank_margin_drives_loss_to_zero() {
        let mut last = f64::INFINITY;
        for m in [0.0, 1.0, 5.0, 20.0, 100.0] {
            let v = rank_loss(&[0.0, m], &[1.0, 2.0]).unwrap().value;
            assert!(v < last);
            last = v;
        }
        assert!(last < 1e-40);
    }

    #[test]
    fn all_tied_flags_and_returns_zero() {
        let r = rank_loss(&[1.0, 5.0, -2.0], &[3.0, 3.0, 3.0]).unwrap();
        assert!(r.all_tied);
        assert_eq!(r.value, 0.0);
        assert!(rank_loss(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn tied_pairs_are_excluded() {
        // pair (0,1) tied, pairs (0,2),(1,2) count
        let r = rank_loss(&[0.0, 0.0, 0.0], &[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(r.pairs, 2);
        assert!((r.value - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn grads_match_finite_differences() {
        let pred = [0.3, -1.2, 2.0, 0.9, 0.1];
        let target = [1.0, 3.0, 3.0, 0.5, 2.0];
        let h = 1e-6;
        let mut g_mse = [0.0; 5];
        let mut g_rank = [0.0; 5];
        mse_loss_grad(&pred, &target, 1.0, &mut g_mse);
        rank_loss_grad(&pred, &target, 1.0, &mut g_rank);
        for i in 0..5 {
            let mut p = pred;
            p[i] += h;
            let (mp, rp) = (mse_loss(&p, &target).unwrap(), rank_loss(&p, &target).unwrap().value);
            p[i] -= 2.0 * h;
            let (mm, rm) = (mse_loss(&p, &target).unwrap(), rank_loss(&p, &target).unwrap().value);
            assert!(((mp - mm) / (2.0 * h) - g_mse[i]).abs() < 1e-6);
            assert!(((rp - rm) / (2.0 * h) - g_rank[i]).abs() < 1e-6);
        }
    }
}
