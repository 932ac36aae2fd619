//! The ANTIQA network.
//!
//! Layout for the default configuration (2-channel 256×256 input):
//!
//! ```text
//! stem     conv3×3 2→64, GN, ReLU
//! stage 0  2 × ConvB(64)  → SE → tap 0 → DownScale 64→128
//! stage 1  2 × ConvB(128) → SE → tap 1 → DownScale 128→256
//! stage 2  2 × ConvB(256) → SE → tap 2
//! APB      per tap: [avgpool G×G ; maxpool G×G] → linear 2·C·G² → 64
//! head     concat(64,64,64) → 256 → 128 → 32 → 1   (ReLU + dropout between)
//! ```
//!
//! ConvB is `1×k conv → GN → ReLU → k×1 conv → GN → ReLU → dropout`, added
//! to a skip path (identity, or 1×1 projection when channels change) and
//! passed through a final ReLU. DownScale is a stride-2 3×3 conv with GN and
//! ReLU. SE is `x ⊙ σ(W₂ ReLU(W₁ GAP(x)))`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::preproc::ModelInput;
use crate::rng::{self, Rng};
use crate::tensor::{Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetError {
    #[error("invalid architecture: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("parameter {0:?} missing")]
    MissingParam(String),
    #[error("parameter {0:?} present twice")]
    DuplicateParam(String),
    #[error("parameter {name:?} has shape {got:?}, expected {expected:?}")]
    ParamShape { name: String, expected: Vec<usize>, got: Vec<usize> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub input_channels: usize,
    /// Side of the square model input.
    pub input_size: usize,
    pub stage_channels: Vec<usize>,
    pub blocks_per_stage: usize,
    pub strip_kernel_k: usize,
    pub se_reduction: usize,
    pub grid_size: usize,
    pub proj_dim: usize,
    pub mlp_dims: Vec<usize>,
    pub groupnorm_groups: usize,
    pub groupnorm_eps: f64,
    pub dropout_rate: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            input_channels: 2,
            input_size: 256,
            stage_channels: vec![64, 128, 256],
            blocks_per_stage: 2,
            strip_kernel_k: 3,
            se_reduction: 16,
            grid_size: 2,
            proj_dim: 64,
            mlp_dims: vec![192, 256, 128, 32, 1],
            groupnorm_groups: 8,
            groupnorm_eps: 1e-5,
            dropout_rate: 0.1,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        let err = |m: String| Err(NetError::Config(m));
        if self.input_channels == 0 {
            return err("input_channels must be positive".into());
        }
        let Some(&c0) = self.stage_channels.first() else {
            return err("stage_channels is empty".into());
        };
        if c0 == 0 {
            return err("stage channels must be positive".into());
        }
        for w in self.stage_channels.windows(2) {
            if w[1] != 2 * w[0] {
                return err(format!("stage_channels must double stage to stage, got {:?}", self.stage_channels));
            }
        }
        if self.blocks_per_stage == 0 {
            return err("blocks_per_stage must be positive".into());
        }
        if self.strip_kernel_k == 0 || self.strip_kernel_k % 2 == 0 {
            return err(format!("strip_kernel_k must be odd, got {}", self.strip_kernel_k));
        }
        if self.se_reduction == 0 || self.stage_channels.iter().any(|c| c / self.se_reduction == 0) {
            return err(format!("se_reduction {} leaves a zero-width SE bottleneck", self.se_reduction));
        }
        if self.groupnorm_groups == 0 || self.stage_channels.iter().any(|c| c % self.groupnorm_groups != 0) {
            return err(format!(
                "every stage width must be divisible by groupnorm_groups={}",
                self.groupnorm_groups
            ));
        }
        if !(self.groupnorm_eps > 0.0) {
            return err("groupnorm_eps must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return err(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.grid_size == 0 || self.proj_dim == 0 {
            return err("grid_size and proj_dim must be positive".into());
        }
        let fused = self.stage_channels.len() * self.proj_dim;
        if self.mlp_dims.first() != Some(&fused) {
            return err(format!(
                "mlp_dims[0] must equal {} stages x proj_dim = {fused}, got {:?}",
                self.stage_channels.len(),
                self.mlp_dims
            ));
        }
        if self.mlp_dims.len() < 2 || self.mlp_dims.last() != Some(&1) || self.mlp_dims.contains(&0) {
            return err(format!("mlp_dims must be positive and end in 1, got {:?}", self.mlp_dims));
        }
        let last = self.stage_sizes().last().copied().unwrap_or(0);
        if last < self.grid_size {
            return err(format!(
                "input_size {} leaves a {last}x{last} last stage, smaller than grid_size {}",
                self.input_size, self.grid_size
            ));
        }
        Ok(())
    }

    /// Spatial side of each stage's feature map.
    pub fn stage_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.stage_channels.len());
        let mut s = self.input_size;
        for i in 0..self.stage_channels.len() {
            if i > 0 {
                s = downscaled(s);
            }
            sizes.push(s);
        }
        sizes
    }
}

/// Output side of a stride-2, pad-1, 3×3 convolution.
fn downscaled(s: usize) -> usize {
    (s + 2 - 3) / 2 + 1
}

/// Named parameter tensors in a fixed construction order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelParams {
    entries: Vec<(String, Tensor)>,
    index: BTreeMap<String, usize>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<(), NetError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(NetError::DuplicateParam(name));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tensor_at(&self, i: usize) -> &Tensor {
        &self.entries[i].1
    }

    pub fn tensor_at_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.entries[i].1
    }

    pub fn name_at(&self, i: usize) -> &str {
        &self.entries[i].0
    }
}

/// Total number of scalar parameters.
pub fn count_params(params: &ModelParams) -> usize {
    params.iter().map(|(_, t)| t.numel()).sum()
}

/// One parameter tensor of the architecture: name, shape and how to initialise it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// Uniform in `±sqrt(6 / fan_in)`.
    HeUniform { fan_in: usize },
    Zeros,
    Ones,
}

struct SpecList(Vec<ParamSpec>);

impl SpecList {
    fn push(&mut self, name: String, shape: Vec<usize>, init: Init) {
        self.0.push(ParamSpec { name, shape, init });
    }
    fn conv(&mut self, prefix: &str, cout: usize, cin: usize, kh: usize, kw: usize, bias: bool) {
        self.push(format!("{prefix}.weight"), vec![cout, cin, kh, kw], Init::HeUniform { fan_in: cin * kh * kw });
        if bias {
            self.push(format!("{prefix}.bias"), vec![cout], Init::Zeros);
        }
    }
    fn norm(&mut self, prefix: &str, c: usize) {
        self.push(format!("{prefix}.weight"), vec![c], Init::Ones);
        self.push(format!("{prefix}.bias"), vec![c], Init::Zeros);
    }
    fn linear(&mut self, prefix: &str, fout: usize, fin: usize) {
        self.push(format!("{prefix}.weight"), vec![fout, fin], Init::HeUniform { fan_in: fin });
        self.push(format!("{prefix}.bias"), vec![fout], Init::Zeros);
    }
}

/// Every parameter the configuration needs, in construction order.
///
/// Convolutions followed by GroupNorm carry no bias.
pub fn param_specs(config: &ArchConfig) -> Result<Vec<ParamSpec>, NetError> {
    config.validate()?;
    let k = config.strip_kernel_k;
    let mut s = SpecList(Vec::new());
    let c0 = config.stage_channels[0];
    s.conv("stem.conv", c0, config.input_channels, 3, 3, false);
    s.norm("stem.gn", c0);
    let mut cin = c0;
    for (si, &c) in config.stage_channels.iter().enumerate() {
        if si > 0 {
            s.conv(&format!("down{si}.conv"), c, cin, 3, 3, false);
            s.norm(&format!("down{si}.gn"), c);
            cin = c;
        }
        for b in 0..config.blocks_per_stage {
            let p = format!("stage{si}.block{b}");
            s.conv(&format!("{p}.conv_h"), c, cin, 1, k, false);
            s.norm(&format!("{p}.gn_h"), c);
            s.conv(&format!("{p}.conv_v"), c, c, k, 1, false);
            s.norm(&format!("{p}.gn_v"), c);
            if cin != c {
                s.conv(&format!("{p}.skip"), c, cin, 1, 1, true);
            }
            cin = c;
        }
        let r = c / config.se_reduction;
        s.linear(&format!("stage{si}.se.fc1"), r, c);
        s.linear(&format!("stage{si}.se.fc2"), c, r);
    }
    let g2 = config.grid_size * config.grid_size;
    for (si, &c) in config.stage_channels.iter().enumerate() {
        s.linear(&format!("apb{si}.proj"), config.proj_dim, 2 * c * g2);
    }
    for (i, w) in config.mlp_dims.windows(2).enumerate() {
        s.linear(&format!("head.fc{i}"), w[1], w[0]);
    }
    Ok(s.0)
}

/// Fresh parameters: He-uniform conv/linear weights, zero biases, unit GN scale.
pub fn build(config: &ArchConfig, rng: &mut Rng) -> Result<ModelParams, NetError> {
    let mut params = ModelParams::new();
    for spec in param_specs(config)? {
        let t = match spec.init {
            Init::Zeros => Tensor::zeros(&spec.shape),
            Init::Ones => Tensor::full(&spec.shape, 1.0),
            Init::HeUniform { fan_in } => {
                let bound = math::sqrt(6.0 / fan_in as f64);
                Tensor::from_fn(&spec.shape, |_| rng.random_range(-bound..bound))
            }
        };
        params.insert(spec.name, t)?;
    }
    Ok(params)
}

/// Checks that `params` holds exactly the tensors `config` needs.
pub fn check_params(config: &ArchConfig, params: &ModelParams) -> Result<(), NetError> {
    let specs = param_specs(config)?;
    for spec in &specs {
        let t = params.get(&spec.name).ok_or_else(|| NetError::MissingParam(spec.name.clone()))?;
        if t.shape() != spec.shape.as_slice() {
            return Err(NetError::ParamShape {
                name: spec.name.clone(),
                expected: spec.shape.clone(),
                got: t.shape().to_vec(),
            });
        }
    }
    if params.len() != specs.len() {
        let extra = params.iter().find(|(n, _)| !specs.iter().any(|s| s.name == *n)).map(|(n, _)| n.to_string());
        return Err(NetError::Config(format!("unexpected parameter {}", extra.unwrap_or_default())));
    }
    Ok(())
}

/// Multiply-add count of a convolution, times two.
pub fn conv_flops(cin: usize, cout: usize, kh: usize, kw: usize, ho: usize, wo: usize) -> u64 {
    2 * (cin * cout * kh * kw) as u64 * (ho * wo) as u64
}

pub fn linear_flops(fin: usize, fout: usize) -> u64 {
    2 * (fin * fout) as u64
}

/// FLOPs (2 × multiply-adds of convolutions and linear layers) for one crop.
pub fn estimate_flops(config: &ArchConfig) -> Result<u64, NetError> {
    config.validate()?;
    let k = config.strip_kernel_k;
    let sizes = config.stage_sizes();
    let c0 = config.stage_channels[0];
    let s0 = config.input_size;
    let mut total = conv_flops(config.input_channels, c0, 3, 3, s0, s0);
    let mut cin = c0;
    for (si, (&c, &sz)) in config.stage_channels.iter().zip(&sizes).enumerate() {
        if si > 0 {
            total += conv_flops(cin, c, 3, 3, sz, sz);
            cin = c;
        }
        for _ in 0..config.blocks_per_stage {
            total += conv_flops(cin, c, 1, k, sz, sz) + conv_flops(c, c, k, 1, sz, sz);
            if cin != c {
                total += conv_flops(cin, c, 1, 1, sz, sz);
            }
            cin = c;
        }
        let r = c / config.se_reduction;
        total += linear_flops(c, r) + linear_flops(r, c);
    }
    let g2 = config.grid_size * config.grid_size;
    for &c in &config.stage_channels {
        total += linear_flops(2 * c * g2, config.proj_dim);
    }
    for w in config.mlp_dims.windows(2) {
        total += linear_flops(w[0], w[1]);
    }
    Ok(total)
}

/// Tape variables of every parameter, aligned with [`ModelParams`] order.
#[derive(Debug, Clone)]
pub struct ParamVars(Vec<Var>);

impl ParamVars {
    pub fn vars(&self) -> &[Var] {
        &self.0
    }

    /// Gradient of every parameter after `backward`; unreached parameters get zeros.
    pub fn gradients(&self, tape: &Tape<'_>, params: &ModelParams) -> Vec<Vec<f64>> {
        self.0
            .iter()
            .enumerate()
            .map(|(i, v)| match tape.grad(*v) {
                Some(g) => g.to_vec(),
                None => vec![0.0; params.tensor_at(i).numel()],
            })
            .collect()
    }
}

/// Output of [`forward`]: the `(B,)` score variable plus parameter handles.
pub struct ForwardOutput {
    pub scores: Var,
    pub params: ParamVars,
    /// SE gate variables, one per stage, each `[B, C]`.
    pub se_gates: Vec<Var>,
}

struct Ctx<'t, 'a, 'r> {
    tape: &'t mut Tape<'a>,
    config: &'t ArchConfig,
    params: &'a ModelParams,
    vars: Vec<Var>,
    mode: Mode,
    rng: &'r mut Rng,
}

impl Ctx<'_, '_, '_> {
    fn p(&self, name: &str) -> Result<Var, NetError> {
        self.params.position(name).map(|i| self.vars[i]).ok_or_else(|| NetError::MissingParam(name.into()))
    }

    fn has(&self, name: &str) -> bool {
        self.params.position(name).is_some()
    }

    /// Frees an intermediate on inference tapes.
    fn done(&mut self, v: Var) {
        self.tape.release(v);
    }

    fn conv_gn_relu(&mut self, x: Var, prefix: &str, norm: &str, stride: usize, pad: (usize, usize)) -> Result<Var, NetError> {
        let w = self.p(&format!("{prefix}.weight"))?;
        let y = self.tape.conv2d(x, w, None, (stride, stride), pad)?;
        let g = self.p(&format!("{norm}.weight"))?;
        let b = self.p(&format!("{norm}.bias"))?;
        let n = self.tape.group_norm(y, self.config.groupnorm_groups, g, b, self.config.groupnorm_eps)?;
        self.done(y);
        let r = self.tape.relu(n);
        self.done(n);
        Ok(r)
    }

    fn dropout(&mut self, x: Var) -> Result<Var, NetError> {
        Ok(self.tape.dropout(x, self.config.dropout_rate, self.mode == Mode::Train, self.rng)?)
    }

    fn conv_block(&mut self, x: Var, prefix: &str) -> Result<Var, NetError> {
        let half = self.config.strip_kernel_k / 2;
        let h = self.conv_gn_relu(x, &format!("{prefix}.conv_h"), &format!("{prefix}.gn_h"), 1, (0, half))?;
        let v = self.conv_gn_relu(h, &format!("{prefix}.conv_v"), &format!("{prefix}.gn_v"), 1, (half, 0))?;
        self.done(h);
        let d = self.dropout(v)?;
        let skip_name = format!("{prefix}.skip");
        let skip = if self.has(&format!("{skip_name}.weight")) {
            let w = self.p(&format!("{skip_name}.weight"))?;
            let b = self.p(&format!("{skip_name}.bias"))?;
            self.tape.conv2d(x, w, Some(b), (1, 1), (0, 0))?
        } else {
            x
        };
        let sum = self.tape.add(d, skip)?;
        if d != v {
            self.done(d);
        }
        self.done(v);
        if skip != x {
            self.done(skip);
        }
        let out = self.tape.relu(sum);
        self.done(sum);
        Ok(out)
    }

    fn squeeze_excite(&mut self, x: Var, prefix: &str) -> Result<(Var, Var), NetError> {
        let z = self.tape.global_avg_pool(x)?;
        let (w1, b1) = (self.p(&format!("{prefix}.fc1.weight"))?, self.p(&format!("{prefix}.fc1.bias"))?);
        let (w2, b2) = (self.p(&format!("{prefix}.fc2.weight"))?, self.p(&format!("{prefix}.fc2.bias"))?);
        let h = self.tape.linear(z, w1, Some(b1))?;
        let h = self.tape.relu(h);
        let s = self.tape.linear(h, w2, Some(b2))?;
        let gate = self.tape.sigmoid(s);
        Ok((self.tape.scale_channels(x, gate)?, gate))
    }

    fn pool_project(&mut self, x: Var, prefix: &str) -> Result<Var, NetError> {
        let g = self.config.grid_size;
        let a = self.tape.adaptive_avg_pool(x, g)?;
        let m = self.tape.adaptive_max_pool(x, g)?;
        let a = self.tape.flatten(a)?;
        let m = self.tape.flatten(m)?;
        let p = self.tape.concat(&[a, m], 1)?;
        let (w, b) = (self.p(&format!("{prefix}.weight"))?, self.p(&format!("{prefix}.bias"))?);
        Ok(self.tape.linear(p, w, Some(b))?)
    }
}

/// Records the network on `tape` for an input batch variable of shape
/// `[B, input_channels, input_size, input_size]`.
///
/// In [`Mode::Eval`] dropout is the identity and `rng` is not touched.
pub fn forward<'a>(
    tape: &mut Tape<'a>,
    config: &ArchConfig,
    params: &'a ModelParams,
    input: Var,
    mode: Mode,
    rng: &mut Rng,
) -> Result<ForwardOutput, NetError> {
    config.validate()?;
    let want = [config.input_channels, config.input_size, config.input_size];
    match tape.shape(input) {
        [_, rest @ ..] if rest == want => {}
        s => {
            return Err(NetError::Tensor(TensorError::dim(
                "forward",
                format!("input shape {s:?}, expected [B, {}, {}, {}]", want[0], want[1], want[2]),
            )))
        }
    }
    let vars = params.iter().map(|(_, t)| tape.param(t)).collect();
    let mut cx = Ctx { tape, config, params, vars, mode, rng };

    let mut x = cx.conv_gn_relu(input, "stem.conv", "stem.gn", 1, (1, 1))?;
    let mut taps = Vec::new();
    let mut se_gates = Vec::new();
    for si in 0..config.stage_channels.len() {
        if si > 0 {
            let prev = x;
            x = cx.conv_gn_relu(x, &format!("down{si}.conv"), &format!("down{si}.gn"), 2, (1, 1))?;
            cx.done(prev);
        }
        for b in 0..config.blocks_per_stage {
            let prev = x;
            x = cx.conv_block(x, &format!("stage{si}.block{b}"))?;
            cx.done(prev);
        }
        let prev = x;
        let (scaled, gate) = cx.squeeze_excite(x, &format!("stage{si}.se"))?;
        cx.done(prev);
        se_gates.push(gate);
        x = scaled;
        taps.push(cx.pool_project(x, &format!("apb{si}.proj"))?);
    }
    let mut h = cx.tape.concat(&taps, 1)?;
    let layers = config.mlp_dims.len() - 1;
    for i in 0..layers {
        let (w, b) = (cx.p(&format!("head.fc{i}.weight"))?, cx.p(&format!("head.fc{i}.bias"))?);
        h = cx.tape.linear(h, w, Some(b))?;
        if i + 1 < layers {
            h = cx.tape.relu(h);
            h = cx.dropout(h)?;
        }
    }
    let batch = cx.tape.shape(h)[0];
    let scores = cx.tape.reshape(h, &[batch])?;
    Ok(ForwardOutput { scores, params: ParamVars(cx.vars), se_gates })
}

/// Scores a stacked batch in eval mode without recording gradients.
pub fn predict(config: &ArchConfig, params: &ModelParams, batch: Tensor) -> Result<Vec<f64>, NetError> {
    let mut tape = Tape::inference();
    let input = tape.constant(batch);
    // Eval mode never draws from the generator.
    let mut unused = rng::seeded(0);
    let out = forward(&mut tape, config, params, input, Mode::Eval, &mut unused)?;
    Ok(tape.value(out.scores).to_vec())
}

/// Scores model inputs in chunks of `batch_size`.
pub fn predict_inputs(
    config: &ArchConfig,
    params: &ModelParams,
    inputs: &[&ModelInput],
    batch_size: usize,
) -> Result<Vec<f64>, NetError> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(batch_size.max(1)) {
        let tensors: Vec<&Tensor> = chunk.iter().map(|m| m.tensor()).collect();
        out.extend(predict(config, params, Tensor::stack(&tensors)?)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny() -> ArchConfig {
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

    #[test]
    fn default_config_is_valid_and_in_parameter_band() {
        let cfg = ArchConfig::default();
        cfg.validate().unwrap();
        let p = build(&cfg, &mut rng::seeded(42)).unwrap();
        let n = count_params(&p);
        assert!((1_000_000..=4_500_000).contains(&n), "{n}");
        check_params(&cfg, &p).unwrap();
    }

    #[test]
    fn config_invariants_are_enforced() {
        let bad = ArchConfig { mlp_dims: vec![190, 256, 128, 32, 1], ..ArchConfig::default() };
        assert!(matches!(bad.validate(), Err(NetError::Config(_))));
        let bad = ArchConfig { stage_channels: vec![64, 96, 256], ..ArchConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ArchConfig { strip_kernel_k: 4, ..ArchConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ArchConfig { input_size: 4, ..ArchConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn build_is_deterministic() {
        let cfg = tiny();
        let a = build(&cfg, &mut rng::seeded(7)).unwrap();
        let b = build(&cfg, &mut rng::seeded(7)).unwrap();
        assert_eq!(a, b);
        let c = build(&cfg, &mut rng::seeded(8)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn micro_case_accounting() {
        let mut p = ModelParams::new();
        p.insert("conv.weight", Tensor::zeros(&[4, 2, 1, 1])).unwrap();
        p.insert("conv.bias", Tensor::zeros(&[4])).unwrap();
        assert_eq!(count_params(&p), 12);
        assert_eq!(conv_flops(2, 4, 1, 1, 256, 256), 1_048_576);
        assert_eq!(count_params(&ModelParams::new()), 0);
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let cfg = tiny();
        let p = build(&cfg, &mut rng::seeded(1)).unwrap();
        let err = predict(&cfg, &p, Tensor::zeros(&[1, 2, 8, 8])).unwrap_err();
        assert!(matches!(err, NetError::Tensor(TensorError::Dimension { .. })));
    }

    #[test]
    fn identical_items_score_identically() {
        let cfg = tiny();
        let p = build(&cfg, &mut rng::seeded(1)).unwrap();
        let y = predict(&cfg, &p, Tensor::zeros(&[3, 2, 16, 16])).unwrap();
        assert!(y.iter().all(|v| v.is_finite()));
        assert_eq!(y[0], y[1]);
        assert_eq!(y[1], y[2]);
    }
}
