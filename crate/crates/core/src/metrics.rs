//! Correlation and similarity measures.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("paired vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {min} values, got {got}")]
    TooShort { min: usize, got: usize },
    #[error("non-finite value in input")]
    NonFinite,
    #[error("correlation undefined: a vector is constant")]
    Undefined,
}

/// Predicted and reference scores of equal length `n ≥ 2`.
#[derive(Debug, Clone, Copy)]
pub struct PairedScores<'a> {
    predicted: &'a [f64],
    reference: &'a [f64],
}

impl<'a> PairedScores<'a> {
    pub fn new(predicted: &'a [f64], reference: &'a [f64]) -> Result<Self, MetricError> {
        if predicted.len() != reference.len() {
            return Err(MetricError::LengthMismatch(predicted.len(), reference.len()));
        }
        if predicted.len() < 2 {
            return Err(MetricError::TooShort { min: 2, got: predicted.len() });
        }
        if predicted.iter().chain(reference).any(|v| !v.is_finite()) {
            return Err(MetricError::NonFinite);
        }
        Ok(PairedScores { predicted, reference })
    }

    pub fn predicted(&self) -> &[f64] {
        self.predicted
    }

    pub fn reference(&self) -> &[f64] {
        self.reference
    }

    pub fn len(&self) -> usize {
        self.predicted.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::Undefined);
    }
    Ok((sxy / math::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Pearson linear correlation coefficient.
pub fn plcc(p: PairedScores<'_>) -> Result<f64, MetricError> {
    pearson(p.predicted, p.reference)
}

/// 1-based ranks with ties sharing the average of the ranks they span.
pub fn mid_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank-order correlation: Pearson correlation of mid-ranks.
pub fn srocc(p: PairedScores<'_>) -> Result<f64, MetricError> {
    pearson(&mid_ranks(p.predicted), &mid_ranks(p.reference))
}

/// PLCC and SROCC together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub plcc: f64,
    pub srocc: f64,
}

pub fn correlate(predicted: &[f64], reference: &[f64]) -> Result<Correlation, MetricError> {
    let p = PairedScores::new(predicted, reference)?;
    Ok(Correlation { plcc: plcc(p)?, srocc: srocc(p)? })
}

/// Unit-cost edit distance between the character sequences of two strings.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 − d_lev / max(|ref|, |hyp|, 1)`, in `[0, 1]`.
pub fn nsim(reference: &str, hypothesis: &str) -> f64 {
    let n = reference.chars().count().max(hypothesis.chars().count()).max(1);
    1.0 - levenshtein(reference, hypothesis) as f64 / n as f64
}

/// Mean after dropping `floor(0.1·N)` ratings from each end of the sorted list.
pub fn trimmed_mos(ratings: &[i64]) -> Result<f64, MetricError> {
    if ratings.len() < 3 {
        return Err(MetricError::TooShort { min: 3, got: ratings.len() });
    }
    let mut sorted = ratings.to_vec();
    sorted.sort_unstable();
    let t = sorted.len() / 10;
    let kept = &sorted[t..sorted.len() - t];
    Ok(kept.iter().sum::<i64>() as f64 / kept.len() as f64)
}

/// Mean, population standard deviation and median of a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let m = mean(values);
        let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
        let mut s = values.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 };
        Some(Summary { count: n, mean: m, std: math::sqrt(var), median })
    }
}
