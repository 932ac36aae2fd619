//! Monotone mapping from OCR confidence in `[0, 1]` to the MOS scale `[0, 5]`.
//!
//! The map is the five-parameter logistic
//!
//! ```text
//! y = upper + (lower − upper) / (1 + (x / inflection)^slope)^asymmetry
//! ```
//!
//! clamped to `[0, 5]`. With `inflection > 0` and `asymmetry > 0` it is
//! monotone in `x` for any slope.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::metrics::{self, Correlation};
use crate::rng::{self, Rng};

pub const MOS_MIN: f64 = 0.0;
pub const MOS_MAX: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("invalid logistic parameters: {0}")]
    Params(String),
    #[error("need at least {min} pairs, got {got}")]
    TooFewPairs { min: usize, got: usize },
    #[error("confidences span {span:.3}, need at least {min}")]
    NarrowSpan { span: f64, min: f64 },
    #[error("non-finite value in calibration data")]
    NonFinite,
    #[error("no restart produced a monotone fit")]
    NoMonotoneFit,
}

/// Five-parameter logistic. Field names follow their roles; the JSON keys
/// are the conventional single letters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveParamLogistic {
    /// Value approached as `x → 0` when `slope > 0`.
    #[serde(rename = "A")]
    pub lower: f64,
    /// Value approached as `x → ∞` when `slope > 0`.
    #[serde(rename = "D")]
    pub upper: f64,
    #[serde(rename = "C")]
    pub inflection: f64,
    #[serde(rename = "B")]
    pub slope: f64,
    #[serde(rename = "E")]
    pub asymmetry: f64,
}

const LOG_FLOOR: f64 = 1e-12;

impl FiveParamLogistic {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let all = [self.lower, self.upper, self.inflection, self.slope, self.asymmetry];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(CalibrationError::Params("non-finite parameter".into()));
        }
        if !(self.inflection > 0.0 && self.asymmetry > 0.0) {
            return Err(CalibrationError::Params(format!(
                "inflection and asymmetry must be positive, got {} and {}",
                self.inflection, self.asymmetry
            )));
        }
        Ok(())
    }

    /// Unclamped curve value.
    pub fn raw(&self, x: f64) -> f64 {
        let z = self.slope * (math::ln(x.max(LOG_FLOOR)) - math::ln(self.inflection));
        let g = math::exp(-self.asymmetry * math::softplus(z));
        self.upper + (self.lower - self.upper) * g
    }

    /// Mapped value for a confidence; `x` is clamped to `[0, 1]` and the
    /// result to `[0, 5]`.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_checked(x).0
    }

    /// Like [`eval`](Self::eval) but also reports whether `x` had to be clamped.
    pub fn eval_checked(&self, x: f64) -> (f64, bool) {
        let xc = x.clamp(0.0, 1.0);
        (self.raw(xc).clamp(MOS_MIN, MOS_MAX), xc != x)
    }

    /// Whether the clamped map is monotone on a `1e-3` grid over `[0, 1]`.
    pub fn is_monotone(&self) -> bool {
        let ys: Vec<f64> = (0..=1000).map(|i| self.eval(i as f64 / 1000.0)).collect();
        let up = ys.windows(2).all(|w| w[1] >= w[0] - 1e-12);
        let down = ys.windows(2).all(|w| w[1] <= w[0] + 1e-12);
        up || down
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub restarts: usize,
    pub steps: usize,
    pub lr: f64,
    /// Levenberg–Marquardt iterations run after each gradient-descent restart.
    pub polish_iters: usize,
    pub min_pairs: usize,
    pub min_span: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { restarts: 8, steps: 2000, lr: 1e-2, polish_iters: 200, min_pairs: 10, min_span: 0.3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub mse: f64,
    pub restart: usize,
    pub monotone: bool,
    pub pairs: usize,
    /// Confidences outside `[0, 1]` that were clamped.
    pub clamped: usize,
    /// Correlations of the raw confidences with MOS; `None` when undefined.
    pub raw: Option<Correlation>,
    pub mapped: Option<Correlation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    #[serde(flatten)]
    pub curve: FiveParamLogistic,
    pub report: FitReport,
}

/// Unconstrained parametrization `(lower, upper, ln inflection, slope, ln asymmetry)`.
type Theta = [f64; 5];

fn curve(t: &Theta) -> FiveParamLogistic {
    FiveParamLogistic { lower: t[0], upper: t[1], inflection: math::exp(t[2]), slope: t[3], asymmetry: math::exp(t[4]) }
}

/// Curve value and gradient with respect to `θ` at one point.
fn value_grad(t: &Theta, lx: f64) -> (f64, Theta) {
    let (a, d, lc, b, le) = (t[0], t[1], t[2], t[3], t[4]);
    let e = math::exp(le);
    let z = b * (lx - lc);
    let l = math::softplus(z);
    let g = math::exp(-e * l);
    let y = d + (a - d) * g;
    let dy_dg = a - d;
    let dg_dz = -e * g * math::sigmoid(z);
    (y, [g, 1.0 - g, dy_dg * dg_dz * -b, dy_dg * dg_dz * (lx - lc), dy_dg * (-e * l * g)])
}

fn mse_and_grad(t: &Theta, lx: &[f64], y: &[f64]) -> (f64, Theta) {
    let mut loss = 0.0;
    let mut grad = [0.0; 5];
    for (&x, &target) in lx.iter().zip(y) {
        let (p, g) = value_grad(t, x);
        let r = p - target;
        loss += r * r;
        for k in 0..5 {
            grad[k] += 2.0 * r * g[k];
        }
    }
    let n = lx.len() as f64;
    (loss / n, grad.map(|v| v / n))
}

fn adam(mut t: Theta, lx: &[f64], y: &[f64], config: &FitConfig) -> Theta {
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut m = [0.0; 5];
    let mut v = [0.0; 5];
    for step in 1..=config.steps {
        let (_, g) = mse_and_grad(&t, lx, y);
        if g.iter().any(|x| !x.is_finite()) {
            break;
        }
        let c1 = 1.0 - math::powf(b1, step as f64);
        let c2 = 1.0 - math::powf(b2, step as f64);
        for k in 0..5 {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            t[k] -= config.lr * (m[k] / c1) / (math::sqrt(v[k] / c2) + eps);
        }
    }
    t
}

/// Solves the 5×5 system `m x = r` by Gaussian elimination with partial pivoting.
fn solve5(mut m: [[f64; 5]; 5], mut r: [f64; 5]) -> Option<[f64; 5]> {
    for col in 0..5 {
        let piv = (col..5).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        r.swap(col, piv);
        for row in col + 1..5 {
            let f = m[row][col] / m[col][col];
            for k in col..5 {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 5];
    for row in (0..5).rev() {
        let s: f64 = (row + 1..5).map(|k| m[row][k] * x[k]).sum();
        x[row] = (r[row] - s) / m[row][row];
    }
    Some(x)
}

/// Levenberg–Marquardt on the squared residuals.
fn polish(mut t: Theta, lx: &[f64], y: &[f64], iters: usize) -> Theta {
    let mut lambda = 1e-3;
    let mut cur = mse_and_grad(&t, lx, y).0;
    for _ in 0..iters {
        let mut jtj = [[0.0; 5]; 5];
        let mut jtr = [0.0; 5];
        for (&x, &target) in lx.iter().zip(y) {
            let (p, g) = value_grad(&t, x);
            let r = p - target;
            for i in 0..5 {
                jtr[i] += g[i] * r;
                for j in 0..5 {
                    jtj[i][j] += g[i] * g[j];
                }
            }
        }
        let mut improved = false;
        for _ in 0..10 {
            let mut a = jtj;
            for (i, row) in a.iter_mut().enumerate() {
                row[i] += lambda * (jtj[i][i] + 1e-12);
            }
            let Some(delta) = solve5(a, jtr.map(|v| -v)) else { break };
            let cand: Theta = core::array::from_fn(|k| t[k] + delta[k]);
            let val = mse_and_grad(&cand, lx, y).0;
            if val.is_finite() && val < cur {
                t = cand;
                cur = val;
                lambda = (lambda / 3.0).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 4.0;
        }
        if !improved {
            break;
        }
    }
    t
}

fn initial(xs: &[f64], y: &[f64], rng: &mut Rng) -> Theta {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted[sorted.len() / 2].max(1e-3);
    let span = (hi - lo).max(1e-3);
    [
        lo + rng.random_range(-0.2..0.2) * span,
        hi + rng.random_range(-0.2..0.2) * span,
        math::ln(mid) + rng.random_range(-0.7..0.7),
        rng.random_range(1.0..6.0),
        rng.random_range(-0.7..0.7),
    ]
}

/// Least-squares 5PL fit from multiple random starts.
///
/// Each restart runs Adam on the unconstrained parameters followed by a
/// Levenberg–Marquardt polish; the lowest-error monotone result wins.
pub fn fit_5pl(pairs: &[(f64, f64)], seed: u64, config: &FitConfig) -> Result<Calibration, CalibrationError> {
    if pairs.len() < config.min_pairs {
        return Err(CalibrationError::TooFewPairs { min: config.min_pairs, got: pairs.len() });
    }
    if pairs.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(CalibrationError::NonFinite);
    }
    let clamped = pairs.iter().filter(|(x, _)| !(0.0..=1.0).contains(x)).count();
    let xs: Vec<f64> = pairs.iter().map(|(x, _)| x.clamp(0.0, 1.0)).collect();
    let y: Vec<f64> = pairs.iter().map(|(_, y)| *y).collect();
    let span = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max) - xs.iter().copied().fold(f64::INFINITY, f64::min);
    if span < config.min_span {
        return Err(CalibrationError::NarrowSpan { span, min: config.min_span });
    }
    let lx: Vec<f64> = xs.iter().map(|x| math::ln(x.max(LOG_FLOOR))).collect();

    let mut rng = rng::derive(seed, 0x3570);
    let mut best: Option<(f64, usize, Theta)> = None;
    for restart in 0..config.restarts.max(1) {
        let t0 = initial(&xs, &y, &mut rng);
        let t = polish(adam(t0, &lx, &y, config), &lx, &y, config.polish_iters);
        let c = curve(&t);
        if c.validate().is_err() || !c.is_monotone() {
            continue;
        }
        let err = pairs.iter().zip(&xs).map(|((_, m), &x)| (c.eval(x) - m) * (c.eval(x) - m)).sum::<f64>() / xs.len() as f64;
        if best.as_ref().map_or(true, |b| err < b.0) {
            best = Some((err, restart, t));
        }
    }
    let (mse, restart, t) = best.ok_or(CalibrationError::NoMonotoneFit)?;
    let c = curve(&t);
    let mapped: Vec<f64> = xs.iter().map(|&x| c.eval(x)).collect();
    let report = FitReport {
        mse,
        restart,
        monotone: true,
        pairs: pairs.len(),
        clamped,
        raw: metrics::correlate(&xs, &y).ok(),
        mapped: metrics::correlate(&mapped, &y).ok(),
    };
    Ok(Calibration { curve: c, report })
}
