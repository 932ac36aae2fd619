//! Statistics for the throughput benchmark: time one crop many times and
//! report frames per second from the fastest run.
//!
//! The clock lives with the caller; see `antiqa::bench` for the timed loop.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub runs: usize,
    /// Untimed runs before measurement starts.
    pub warmup: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { runs: 500, warmup: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub runs: usize,
    pub min_s: f64,
    pub median_s: f64,
    pub mean_s: f64,
    /// `1 / min_s`.
    pub fps: f64,
}

impl TimingSummary {
    /// Summary of per-run durations in seconds; `None` for an empty list.
    pub fn from_times(seconds: &[f64]) -> Option<Self> {
        if seconds.is_empty() {
            return None;
        }
        let mut s: Vec<f64> = seconds.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 };
        let mean = s.iter().sum::<f64>() / n as f64;
        Some(TimingSummary { runs: n, min_s: s[0], median_s: median, mean_s: mean, fps: 1.0 / s[0] })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_run_fps() {
        let t = TimingSummary::from_times(&[0.004]).unwrap();
        assert_eq!(t.fps, 250.0);
        assert_eq!(t.min_s, t.median_s);
    }

    #[test]
    fn empty_is_none() {
        assert!(TimingSummary::from_times(&[]).is_none());
    }
}
