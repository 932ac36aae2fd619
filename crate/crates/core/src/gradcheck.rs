//! Finite-difference audit of tape gradients.
//!
//! Each check records a function on a tape, reduces its output to a scalar
//! with fixed random weights, and compares the analytic gradient of every
//! (or a sample of every) input entry against the central difference
//! `(f(x + h) − f(x − h)) / 2h`. The error measure is
//! `|a − n| / max(|a|, |n|, floor)`, so gradients far below `floor` are
//! compared absolutely.
//!
//! The network is piecewise smooth (ReLU, max pooling). A difference that
//! straddles a kink measures the jump rather than the gradient, so the
//! network check uses a smaller step and, when the forward and backward
//! one-sided differences disagree, counts the entry as a kink crossing and
//! draws another one instead.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::net::{self, ArchConfig, Mode, ModelParams, NetError};
use crate::rng::{self, Rng};
use crate::tensor::{Tape, Tensor, TensorError, Var};
use crate::train::LossConfig;

pub const PRIMITIVE_TOLERANCE: f64 = 1e-4;
pub const NETWORK_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradCheckConfig {
    /// Step for the primitive checks.
    pub step: f64,
    /// Step for the end-to-end network check.
    pub network_step: f64,
    pub floor: f64,
    /// Draws allowed per sampled entry before a kink crossing counts as a failure.
    pub kink_retries: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-5, network_step: 1e-6, floor: 1e-6, kink_retries: 8 }
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub seed: u64,
    pub entries: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
    /// Entries redrawn because the step straddled a kink.
    #[serde(default)]
    pub kinks: usize,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

/// Reduces a non-scalar output to a scalar with fixed weights.
fn scalarize(tape: &mut Tape<'_>, out: Var, weights: &[f64]) -> Result<Var, TensorError> {
    tape.dot_const(out, weights.to_vec())
}

fn random_weights(n: usize, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Checks `f` against central differences over every entry of `inputs`.
///
/// `f` receives the input variables in order and may return any shape.
pub fn check_function<F>(
    name: &str,
    inputs: &[Tensor],
    f: F,
    seed: u64,
    tolerance: f64,
    config: &GradCheckConfig,
) -> Result<CheckResult, TensorError>
where
    F: Fn(&mut Tape<'_>, &[Var]) -> Result<Var, TensorError>,
{
    let mut rng = rng::derive(seed, 0x6763);
    let eval = |xs: &[Tensor], weights: Option<&[f64]>| -> Result<(f64, usize), TensorError> {
        let mut tape = Tape::inference();
        let vars: Vec<Var> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let n = tape.value(out).len();
        let v = match weights {
            Some(w) => {
                let s = scalarize(&mut tape, out, w)?;
                tape.value(s)[0]
            }
            None => 0.0,
        };
        Ok((v, n))
    };
    let (_, out_len) = eval(inputs, None)?;
    let weights = random_weights(out_len, &mut rng);

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let out = f(&mut tape, &vars)?;
    let loss = scalarize(&mut tape, out, &weights)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| tape.grad(*v).map_or_else(|| vec![0.0; t.numel()], <[f64]>::to_vec))
        .collect();
    drop(tape);

    let mut worst: f64 = 0.0;
    let mut entries = 0;
    let mut xs = inputs.to_vec();
    for i in 0..xs.len() {
        for j in 0..xs[i].numel() {
            let orig = xs[i].data()[j];
            xs[i].data_mut()[j] = orig + config.step;
            let (plus, _) = eval(&xs, Some(&weights))?;
            xs[i].data_mut()[j] = orig - config.step;
            let (minus, _) = eval(&xs, Some(&weights))?;
            xs[i].data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * config.step);
            worst = worst.max(relative_error(analytic[i][j], numeric, config.floor));
            entries += 1;
        }
    }
    Ok(CheckResult { name: name.to_string(), seed, entries, max_rel_error: worst, tolerance, kinks: 0 })
}

fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Values bounded away from zero so ReLU kinks are never straddled.
fn off_zero(shape: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let m: f64 = rng.random_range(0.05..1.0);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    })
}

type Case = (&'static str, Vec<Tensor>, fn(&mut Tape<'_>, &[Var]) -> Result<Var, TensorError>);

fn primitive_cases(rng: &mut Rng) -> Vec<Case> {
    vec![
        ("conv2d_3x3_pad1_bias", vec![uniform(&[2, 3, 5, 6], -1.0, 1.0, rng), uniform(&[4, 3, 3, 3], -1.0, 1.0, rng), uniform(&[4], -1.0, 1.0, rng)], |t, v| t.conv2d(v[0], v[1], Some(v[2]), (1, 1), (1, 1))),
        ("conv2d_strip_1x3", vec![uniform(&[1, 2, 4, 7], -1.0, 1.0, rng), uniform(&[3, 2, 1, 3], -1.0, 1.0, rng)], |t, v| t.conv2d(v[0], v[1], None, (1, 1), (0, 1))),
        ("conv2d_strip_3x1", vec![uniform(&[1, 2, 7, 4], -1.0, 1.0, rng), uniform(&[3, 2, 3, 1], -1.0, 1.0, rng)], |t, v| t.conv2d(v[0], v[1], None, (1, 1), (1, 0))),
        ("conv2d_stride2", vec![uniform(&[2, 2, 7, 7], -1.0, 1.0, rng), uniform(&[4, 2, 3, 3], -1.0, 1.0, rng)], |t, v| t.conv2d(v[0], v[1], None, (2, 2), (1, 1))),
        ("conv2d_1x1_bias", vec![uniform(&[2, 3, 4, 4], -1.0, 1.0, rng), uniform(&[5, 3, 1, 1], -1.0, 1.0, rng), uniform(&[5], -1.0, 1.0, rng)], |t, v| t.conv2d(v[0], v[1], Some(v[2]), (1, 1), (0, 0))),
        ("group_norm", vec![uniform(&[2, 4, 3, 3], -2.0, 2.0, rng), uniform(&[4], 0.5, 1.5, rng), uniform(&[4], -0.5, 0.5, rng)], |t, v| t.group_norm(v[0], 2, v[1], v[2], 1e-5)),
        ("relu", vec![off_zero(&[2, 3, 4], rng)], |t, v| Ok(t.relu(v[0]))),
        ("sigmoid", vec![uniform(&[10], -4.0, 4.0, rng)], |t, v| Ok(t.sigmoid(v[0]))),
        ("softplus", vec![uniform(&[10], -4.0, 4.0, rng)], |t, v| Ok(t.softplus(v[0]))),
        ("scale", vec![uniform(&[6], -1.0, 1.0, rng)], |t, v| Ok(t.scale(v[0], -1.7))),
        ("dropout_mask", vec![uniform(&[24], -1.0, 1.0, rng)], |t, v| {
            let mask = (0..24).map(|i| if i % 3 == 0 { 0.0 } else { 1.5 }).collect();
            Ok(t.dropout_with_mask(v[0], mask))
        }),
        ("linear_bias", vec![uniform(&[3, 5], -1.0, 1.0, rng), uniform(&[4, 5], -1.0, 1.0, rng), uniform(&[4], -1.0, 1.0, rng)], |t, v| t.linear(v[0], v[1], Some(v[2]))),
        ("linear", vec![uniform(&[2, 6], -1.0, 1.0, rng), uniform(&[3, 6], -1.0, 1.0, rng)], |t, v| t.linear(v[0], v[1], None)),
        ("add", vec![uniform(&[2, 3], -1.0, 1.0, rng), uniform(&[2, 3], -1.0, 1.0, rng)], |t, v| t.add(v[0], v[1])),
        ("mul", vec![uniform(&[2, 3], -1.0, 1.0, rng), uniform(&[2, 3], -1.0, 1.0, rng)], |t, v| t.mul(v[0], v[1])),
        ("scale_channels", vec![uniform(&[2, 3, 2, 2], -1.0, 1.0, rng), uniform(&[2, 3], 0.1, 0.9, rng)], |t, v| t.scale_channels(v[0], v[1])),
        ("concat_axis1", vec![uniform(&[2, 1, 2, 2], -1.0, 1.0, rng), uniform(&[2, 3, 2, 2], -1.0, 1.0, rng)], |t, v| t.concat(&[v[0], v[1]], 1)),
        ("concat_vectors", vec![uniform(&[2, 3], -1.0, 1.0, rng), uniform(&[2, 2], -1.0, 1.0, rng), uniform(&[2, 4], -1.0, 1.0, rng)], |t, v| t.concat(&[v[0], v[1], v[2]], 1)),
        ("global_avg_pool", vec![uniform(&[2, 3, 3, 4], -1.0, 1.0, rng)], |t, v| t.global_avg_pool(v[0])),
        ("adaptive_avg_pool", vec![uniform(&[1, 2, 5, 7], -1.0, 1.0, rng)], |t, v| t.adaptive_avg_pool(v[0], 2)),
        ("adaptive_max_pool", vec![uniform(&[1, 2, 5, 7], -1.0, 1.0, rng)], |t, v| t.adaptive_max_pool(v[0], 2)),
        ("reshape_flatten", vec![uniform(&[2, 2, 3], -1.0, 1.0, rng)], |t, v| {
            let r = t.reshape(v[0], &[3, 4])?;
            let r = t.reshape(r, &[2, 3, 2])?;
            t.flatten(r)
        }),
        ("sum", vec![uniform(&[7], -1.0, 1.0, rng)], |t, v| Ok(t.sum(v[0]))),
        ("dot_const", vec![uniform(&[5], -1.0, 1.0, rng)], |t, v| t.dot_const(v[0], vec![0.5, -1.0, 2.0, 0.0, 3.0])),
        ("mse_loss", vec![uniform(&[6], 0.0, 5.0, rng)], |t, v| t.mse_loss(v[0], &[1.0, 3.0, 3.0, 0.5, 2.0, 4.5])),
        ("rank_loss", vec![uniform(&[6], 0.0, 5.0, rng)], |t, v| t.rank_loss(v[0], &[1.0, 3.0, 3.0, 0.5, 2.0, 4.5])),
    ]
}

/// Checks every tape operation once for `seed`.
pub fn check_primitives(seed: u64, config: &GradCheckConfig) -> Result<Vec<CheckResult>, TensorError> {
    let mut rng = rng::derive(seed, 0x7072);
    primitive_cases(&mut rng)
        .into_iter()
        .map(|(name, inputs, f)| check_function(name, &inputs, f, seed, PRIMITIVE_TOLERANCE, config))
        .collect()
}

/// Narrow network used for the end-to-end audit: full topology, small widths.
pub fn audit_arch() -> ArchConfig {
    ArchConfig {
        input_size: 16,
        stage_channels: vec![4, 8, 16],
        se_reduction: 2,
        proj_dim: 4,
        mlp_dims: vec![12, 8, 4, 1],
        groupnorm_groups: 2,
        ..ArchConfig::default()
    }
}

fn network_loss(tape: &mut Tape<'_>, out_scores: Var, targets: &[f64], loss: &LossConfig) -> Result<Var, TensorError> {
    let m = tape.mse_loss(out_scores, targets)?;
    let r = tape.rank_loss(out_scores, targets)?;
    let a = tape.scale(m, loss.alpha);
    let b = tape.scale(r, 1.0 - loss.alpha);
    tape.add(a, b)
}

fn network_value(arch: &ArchConfig, params: &ModelParams, input: &Tensor, targets: &[f64]) -> Result<f64, NetError> {
    let mut tape = Tape::inference();
    let x = tape.constant(input.clone());
    let mut unused = rng::seeded(0);
    let out = net::forward(&mut tape, arch, params, x, Mode::Eval, &mut unused)?;
    let l = network_loss(&mut tape, out.scores, targets, &LossConfig::default())?;
    Ok(tape.value(l)[0])
}

/// Checks the training loss of the full network in eval mode with respect
/// to `samples_per_tensor` random entries of every parameter and of the input.
pub fn check_network(
    arch: &ArchConfig,
    seed: u64,
    batch: usize,
    samples_per_tensor: usize,
    config: &GradCheckConfig,
) -> Result<CheckResult, NetError> {
    let mut rng = rng::derive(seed, 0x6e65);
    let mut params = net::build(arch, &mut rng)?;
    // Non-trivial norm affine parameters and biases exercise every path.
    for (name, t) in params.iter_mut() {
        if t.ndim() == 1 {
            let base = if name.ends_with(".weight") { 1.0 } else { 0.0 };
            t.data_mut().iter_mut().for_each(|v| *v = base + rng.random_range(-0.3..0.3));
        }
    }
    let s = arch.input_size;
    let mut input = uniform(&[batch, arch.input_channels, s, s], 0.0, 1.0, &mut rng);
    let targets: Vec<f64> = (0..batch).map(|i| (i as f64 + rng.random_range(0.0..1.0)) * 5.0 / batch as f64).collect();

    let (param_grads, input_grad) = {
        let mut tape = Tape::new();
        let x = tape.leaf(input.clone(), true);
        let mut unused = rng::seeded(0);
        let out = net::forward(&mut tape, arch, &params, x, Mode::Eval, &mut unused)?;
        let l = network_loss(&mut tape, out.scores, &targets, &LossConfig::default())?;
        tape.backward(l)?;
        (out.params.gradients(&tape, &params), tape.grad(x).map(<[f64]>::to_vec).unwrap_or_default())
    };

    let h = config.network_step;
    let base = network_value(arch, &params, &input, &targets)?;
    let mut worst: f64 = 0.0;
    let (mut entries, mut kinks) = (0, 0);
    // Central difference at one entry, or None when the step straddles a kink.
    let probe = |analytic: f64, at: &mut dyn FnMut(f64) -> Result<f64, NetError>| -> Result<Option<f64>, NetError> {
        let plus = at(h)?;
        let minus = at(-h)?;
        at(0.0)?;
        let (fwd, bwd) = ((plus - base) / h, (base - minus) / h);
        if relative_error(fwd, bwd, config.floor) > NETWORK_TOLERANCE {
            return Ok(None);
        }
        Ok(Some(relative_error(analytic, (plus - minus) / (2.0 * h), config.floor)))
    };
    let mut record = |err: Option<f64>, worst: &mut f64| match err {
        Some(e) => {
            *worst = worst.max(e);
            entries += 1;
            true
        }
        None => {
            kinks += 1;
            false
        }
    };
    for i in 0..params.len() {
        let n = params.tensor_at(i).numel();
        for _ in 0..samples_per_tensor.min(n) {
            for attempt in 0..=config.kink_retries {
                let j = rng.random_range(0..n);
                let orig = params.tensor_at(i).data()[j];
                let err = probe(param_grads[i][j], &mut |d| {
                    params.tensor_at_mut(i).data_mut()[j] = orig + d;
                    network_value(arch, &params, &input, &targets)
                })?;
                if record(err, &mut worst) {
                    break;
                }
                if attempt == config.kink_retries {
                    worst = f64::INFINITY;
                }
            }
        }
    }
    let n = input.numel();
    for _ in 0..samples_per_tensor {
        for attempt in 0..=config.kink_retries {
            let j = rng.random_range(0..n);
            let orig = input.data()[j];
            let err = probe(input_grad[j], &mut |d| {
                input.data_mut()[j] = orig + d;
                network_value(arch, &params, &input, &targets)
            })?;
            if record(err, &mut worst) {
                break;
            }
            if attempt == config.kink_retries {
                worst = f64::INFINITY;
            }
        }
    }
    Ok(CheckResult { name: format!("network_{}px", s), seed, entries, max_rel_error: worst, tolerance: NETWORK_TOLERANCE, kinks })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub primitives: Vec<CheckResult>,
    pub network: Vec<CheckResult>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.primitives.iter().chain(&self.network).all(CheckResult::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.primitives.iter().chain(&self.network).filter(|c| !c.passed())
    }
}

/// Primitive and network checks for every seed.
pub fn audit(seeds: &[u64], arch: &ArchConfig, config: &GradCheckConfig) -> Result<AuditReport, NetError> {
    let mut primitives = Vec::new();
    let mut network = Vec::new();
    for &seed in seeds {
        primitives.extend(check_primitives(seed, config)?);
        network.push(check_network(arch, seed, 2, 3, config)?);
    }
    Ok(AuditReport { primitives, network })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0, 1e-6), 0.0);
        assert!((relative_error(2.0, 1.0, 1e-6) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0, 1e-6) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn primitives_pass_one_seed() {
        let r = check_primitives(7, &GradCheckConfig::default()).unwrap();
        for c in &r {
            assert!(c.passed(), "{c:?}");
        }
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // Value is 3x but the detached half contributes no gradient.
        let x = Tensor::new(vec![3], vec![0.1, 0.2, 0.3]).unwrap();
        let r = check_function(
            "detached",
            &[x],
            |t, v| {
                let detached = t.constant(t.tensor(v[0]));
                let a = t.scale(v[0], 2.0);
                let b = t.scale(detached, 1.0);
                t.add(a, b)
            },
            1,
            PRIMITIVE_TOLERANCE,
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(!r.passed());
    }

    #[test]
    fn network_passes_across_seeds() {
        for seed in 0..30 {
            let r = check_network(&audit_arch(), seed, 2, 3, &GradCheckConfig::default()).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn network_passes_one_seed() {
        let r = check_network(&audit_arch(), 3, 2, 2, &GradCheckConfig::default()).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
