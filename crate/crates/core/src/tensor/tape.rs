use alloc::borrow::Cow;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::kernels::{self, bin_bounds, ConvGeom};
use super::{Tensor, TensorError};
use crate::math;
use crate::rng::Rng;
use crate::train::loss;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    Conv2d { input: Var, weight: Var, bias: Option<Var>, geom: ConvGeom, out_channels: usize },
    GroupNorm { input: Var, gamma: Var, beta: Var, groups: usize, xhat: Vec<f64>, rstd: Vec<f64> },
    Relu(Var),
    Sigmoid(Var),
    Softplus(Var),
    Dropout { input: Var, mask: Vec<f64> },
    Linear { input: Var, weight: Var, bias: Option<Var> },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    ScaleChannels { input: Var, gate: Var },
    Concat { inputs: Vec<Var>, axis: usize },
    GlobalAvgPool(Var),
    AdaptiveAvgPool { input: Var, grid: usize },
    AdaptiveMaxPool { input: Var, argmax: Vec<usize> },
    Reshape(Var),
    Sum(Var),
    Dot { input: Var, weights: Vec<f64> },
    MseLoss { pred: Var, target: Vec<f64> },
    RankLoss { pred: Var, target: Vec<f64> },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            Op::Conv2d { input, weight, bias, .. } | Op::Linear { input, weight, bias } => {
                let mut v = vec![*input, *weight];
                v.extend(bias.iter().copied());
                v
            }
            Op::GroupNorm { input, gamma, beta, .. } => vec![*input, *gamma, *beta],
            Op::Relu(x)
            | Op::Sigmoid(x)
            | Op::Softplus(x)
            | Op::Scale(x, _)
            | Op::GlobalAvgPool(x)
            | Op::Reshape(x)
            | Op::Sum(x) => vec![*x],
            Op::Dropout { input, .. }
            | Op::AdaptiveAvgPool { input, .. }
            | Op::AdaptiveMaxPool { input, .. }
            | Op::Dot { input, .. } => vec![*input],
            Op::Add(a, b) | Op::Mul(a, b) => vec![*a, *b],
            Op::ScaleChannels { input, gate } => vec![*input, *gate],
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::MseLoss { pred, .. } | Op::RankLoss { pred, .. } => vec![*pred],
        }
    }
}

struct Node<'a> {
    shape: Vec<usize>,
    value: Cow<'a, [f64]>,
    op: Op,
    needs_grad: bool,
}

/// Recording of a computation for reverse-mode differentiation.
///
/// Parameters can be borrowed for the tape's lifetime ([`Tape::param`]) so a
/// forward pass never copies model weights. Gradients accumulate on leaves
/// across calls to [`Tape::backward`] until [`Tape::zero_grad`].
///
/// With gradients disabled ([`Tape::inference`]) no node requires a gradient
/// and intermediate values may be dropped with [`Tape::release`].
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    leaf_grads: Vec<Option<Vec<f64>>>,
    grad_enabled: bool,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn slot<'g>(lower: &'g mut [Option<Vec<f64>>], nodes: &[Node<'_>], v: Var) -> Option<&'g mut [f64]> {
    let n = &nodes[v.0];
    if !n.needs_grad {
        return None;
    }
    let len = numel(&n.shape);
    Some(lower[v.0].get_or_insert_with(|| vec![0.0; len]).as_mut_slice())
}

fn take(lower: &mut [Option<Vec<f64>>], nodes: &[Node<'_>], v: Var) -> Option<Vec<f64>> {
    let n = &nodes[v.0];
    if !n.needs_grad {
        return None;
    }
    Some(lower[v.0].take().unwrap_or_else(|| vec![0.0; numel(&n.shape)]))
}

fn give(lower: &mut [Option<Vec<f64>>], v: Var, buf: Option<Vec<f64>>) {
    let Some(buf) = buf else { return };
    match &mut lower[v.0] {
        Some(existing) => existing.iter_mut().zip(&buf).for_each(|(a, b)| *a += b),
        empty => *empty = Some(buf),
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), leaf_grads: Vec::new(), grad_enabled: true }
    }

    /// Tape that records values only; `backward` is unavailable.
    pub fn inference() -> Self {
        Tape { nodes: Vec::new(), leaf_grads: Vec::new(), grad_enabled: false }
    }

    pub fn grad_enabled(&self) -> bool {
        self.grad_enabled
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Cow<'a, [f64]>, op: Op) -> Var {
        let needs_grad = self.grad_enabled
            && match &op {
                Op::Leaf => false,
                other => other.inputs().iter().any(|v| self.nodes[v.0].needs_grad),
            };
        debug_assert_eq!(numel(&shape), value.len());
        self.nodes.push(Node { shape, value, op, needs_grad });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push_leaf(&mut self, shape: Vec<usize>, value: Cow<'a, [f64]>, requires_grad: bool) -> Var {
        let v = self.push(shape, value, Op::Leaf);
        self.nodes[v.0].needs_grad = requires_grad && self.grad_enabled;
        v
    }

    /// Owned leaf.
    pub fn leaf(&mut self, tensor: Tensor, requires_grad: bool) -> Var {
        let Tensor { shape, data } = tensor;
        self.push_leaf(shape, Cow::Owned(data), requires_grad)
    }

    /// Borrowed trainable leaf.
    pub fn param(&mut self, tensor: &'a Tensor) -> Var {
        self.push_leaf(tensor.shape.clone(), Cow::Borrowed(&tensor.data), true)
    }

    /// Owned leaf that never receives a gradient.
    pub fn constant(&mut self, tensor: Tensor) -> Var {
        self.leaf(tensor, false)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor { shape: self.nodes[v.0].shape.clone(), data: self.nodes[v.0].value.to_vec() }
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.leaf_grads[v.0].as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    /// Drops the stored value of a node. Only valid on an inference tape.
    pub fn release(&mut self, v: Var) {
        if !self.grad_enabled {
            self.nodes[v.0].value = Cow::Owned(Vec::new());
        }
    }

    fn value_checked(&self, v: Var, op: &'static str) -> Result<&[f64], TensorError> {
        let n = &self.nodes[v.0];
        if n.value.len() != numel(&n.shape) {
            return Err(TensorError::Usage(format!("{op}: input node {} was released", v.0)));
        }
        Ok(&n.value)
    }

    fn nchw(&self, v: Var, op: &'static str) -> Result<[usize; 4], TensorError> {
        match self.shape(v) {
            &[n, c, h, w] => Ok([n, c, h, w]),
            s => Err(TensorError::dim(op, format!("expected NCHW input, got shape {s:?}"))),
        }
    }

    // ---------------------------------------------------------------- ops

    pub fn conv2d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Option<Var>,
        stride: (usize, usize),
        padding: (usize, usize),
    ) -> Result<Var, TensorError> {
        const OP: &str = "conv2d";
        let [n, c, h, w] = self.nchw(input, OP)?;
        let (o, kh, kw) = match self.shape(weight) {
            &[o, i, kh, kw] if i == c => (o, kh, kw),
            s => {
                return Err(TensorError::dim(
                    OP,
                    format!("weight shape {s:?} incompatible with {c} input channels (want [O, {c}, kh, kw])"),
                ))
            }
        };
        if let Some(b) = bias {
            if self.shape(b) != [o] {
                return Err(TensorError::dim(OP, format!("bias shape {:?}, want [{o}]", self.shape(b))));
            }
        }
        if stride.0 == 0 || stride.1 == 0 {
            return Err(TensorError::Config { op: OP, detail: "stride must be positive".into() });
        }
        if h + 2 * padding.0 < kh || w + 2 * padding.1 < kw {
            return Err(TensorError::dim(OP, format!("kernel {kh}x{kw} larger than padded input {h}x{w}")));
        }
        let ho = (h + 2 * padding.0 - kh) / stride.0 + 1;
        let wo = (w + 2 * padding.1 - kw) / stride.1 + 1;
        let geom = ConvGeom { c, h, w, kh, kw, sh: stride.0, sw: stride.1, ph: padding.0, pw: padding.1, ho, wo };
        let x = self.value_checked(input, OP)?;
        let wv = self.value_checked(weight, OP)?;
        let bv = match bias {
            Some(b) => Some(self.value_checked(b, OP)?),
            None => None,
        };
        let out = kernels::conv2d_forward(x, n, wv, o, bv, &geom);
        Ok(self.push(vec![n, o, ho, wo], Cow::Owned(out), Op::Conv2d { input, weight, bias, geom, out_channels: o }))
    }

    pub fn group_norm(
        &mut self,
        input: Var,
        groups: usize,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<Var, TensorError> {
        const OP: &str = "group_norm";
        let [n, c, h, w] = self.nchw(input, OP)?;
        if groups == 0 || c % groups != 0 {
            return Err(TensorError::Config { op: OP, detail: format!("{c} channels not divisible into {groups} groups") });
        }
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(TensorError::dim(OP, format!("gamma/beta must have shape [{c}]")));
        }
        if !(eps > 0.0) {
            return Err(TensorError::Config { op: OP, detail: "eps must be positive".into() });
        }
        let x = self.value_checked(input, OP)?;
        let gm = self.value(gamma);
        let bt = self.value(beta);
        let cpg = c / groups;
        let gsz = cpg * h * w;
        let hw = h * w;
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        let mut rstd = vec![0.0; n * groups];
        for s in 0..n {
            for g in 0..groups {
                let base = (s * c + g * cpg) * hw;
                let xs = &x[base..base + gsz];
                let mean = xs.iter().sum::<f64>() / gsz as f64;
                let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / gsz as f64;
                let r = 1.0 / math::sqrt(var + eps);
                rstd[s * groups + g] = r;
                for ci in 0..cpg {
                    let ch = g * cpg + ci;
                    let off = base + ci * hw;
                    for p in 0..hw {
                        let xn = (x[off + p] - mean) * r;
                        xhat[off + p] = xn;
                        out[off + p] = xn * gm[ch] + bt[ch];
                    }
                }
            }
        }
        Ok(self.push(vec![n, c, h, w], Cow::Owned(out), Op::GroupNorm { input, gamma, beta, groups, xhat, rstd }))
    }

    fn unary(&mut self, input: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out: Vec<f64> = self.value(input).iter().map(|&v| f(v)).collect();
        let shape = self.shape(input).to_vec();
        self.push(shape, Cow::Owned(out), op)
    }

    pub fn relu(&mut self, input: Var) -> Var {
        self.unary(input, Op::Relu(input), |v| if v > 0.0 { v } else { 0.0 })
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        self.unary(input, Op::Sigmoid(input), math::sigmoid)
    }

    pub fn softplus(&mut self, input: Var) -> Var {
        self.unary(input, Op::Softplus(input), math::softplus)
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        self.unary(input, Op::Scale(input, factor), |v| v * factor)
    }

    /// Inverted dropout: identity when `train` is false or `rate` is zero,
    /// otherwise zeroes each element with probability `rate` and scales
    /// survivors by `1 / (1 - rate)`.
    pub fn dropout(&mut self, input: Var, rate: f64, train: bool, rng: &mut Rng) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(TensorError::Config { op: "dropout", detail: format!("rate {rate} outside [0, 1)") });
        }
        if !train || rate == 0.0 {
            return Ok(input);
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> =
            (0..self.value(input).len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
        Ok(self.dropout_with_mask(input, mask))
    }

    /// Dropout with an explicit multiplicative mask.
    pub fn dropout_with_mask(&mut self, input: Var, mask: Vec<f64>) -> Var {
        let out: Vec<f64> = self.value(input).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = self.shape(input).to_vec();
        self.push(shape, Cow::Owned(out), Op::Dropout { input, mask })
    }

    /// `y = x Wᵀ + b` for `x: [B, in]`, `W: [out, in]`, `b: [out]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var, TensorError> {
        const OP: &str = "linear";
        let (b, fin) = match self.shape(input) {
            &[b, f] => (b, f),
            s => return Err(TensorError::dim(OP, format!("expected [B, in] input, got {s:?}"))),
        };
        let fout = match self.shape(weight) {
            &[o, i] if i == fin => o,
            s => return Err(TensorError::dim(OP, format!("weight {s:?} incompatible with {fin} input features"))),
        };
        if let Some(bv) = bias {
            if self.shape(bv) != [fout] {
                return Err(TensorError::dim(OP, format!("bias shape {:?}, want [{fout}]", self.shape(bv))));
            }
        }
        let mut out = vec![0.0; b * fout];
        let beta = if let Some(bv) = bias {
            let bvals = self.value(bv);
            for row in out.chunks_mut(fout) {
                row.copy_from_slice(bvals);
            }
            1.0
        } else {
            0.0
        };
        let x = self.value_checked(input, OP)?;
        let wv = self.value(weight);
        kernels::gemm(b, fin, fout, x, (fin as isize, 1), wv, (1, fin as isize), beta, &mut out);
        Ok(self.push(vec![b, fout], Cow::Owned(out), Op::Linear { input, weight, bias }))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<(), TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::dim(op, format!("shapes {:?} and {:?} differ", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape(a, b, "add")?;
        let out: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, Cow::Owned(out), Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.same_shape(a, b, "mul")?;
        let out: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, Cow::Owned(out), Op::Mul(a, b)))
    }

    /// Multiplies each channel plane of `input: [N, C, H, W]` by `gate: [N, C]`.
    pub fn scale_channels(&mut self, input: Var, gate: Var) -> Result<Var, TensorError> {
        const OP: &str = "scale_channels";
        let [n, c, h, w] = self.nchw(input, OP)?;
        if self.shape(gate) != [n, c] {
            return Err(TensorError::dim(OP, format!("gate shape {:?}, want [{n}, {c}]", self.shape(gate))));
        }
        let x = self.value_checked(input, OP)?;
        let g = self.value(gate);
        let hw = h * w;
        let mut out = vec![0.0; x.len()];
        for (i, gv) in g.iter().enumerate() {
            for p in 0..hw {
                out[i * hw + p] = x[i * hw + p] * gv;
            }
        }
        Ok(self.push(vec![n, c, h, w], Cow::Owned(out), Op::ScaleChannels { input, gate }))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        const OP: &str = "concat";
        let first = *inputs.first().ok_or_else(|| TensorError::Usage("concat of zero inputs".into()))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(TensorError::dim(OP, format!("axis {axis} out of range for rank {}", base.len())));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(TensorError::dim(OP, format!("shape {s:?} incompatible with {base:?} along axis {axis}")));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let blk = self.shape(v)[axis] * inner;
                out.extend_from_slice(&self.value_checked(v, OP)?[o * blk..(o + 1) * blk]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        Ok(self.push(shape, Cow::Owned(out), Op::Concat { inputs: inputs.to_vec(), axis }))
    }

    /// `[N, C, H, W] -> [N, C]` spatial mean.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var, TensorError> {
        let [n, c, h, w] = self.nchw(input, "global_avg_pool")?;
        let hw = h * w;
        let x = self.value_checked(input, "global_avg_pool")?;
        let out: Vec<f64> = x.chunks(hw).map(|p| p.iter().sum::<f64>() / hw as f64).collect();
        Ok(self.push(vec![n, c], Cow::Owned(out), Op::GlobalAvgPool(input)))
    }

    fn check_grid(&self, input: Var, grid: usize, op: &'static str) -> Result<[usize; 4], TensorError> {
        let dims = self.nchw(input, op)?;
        if grid == 0 || dims[2] < grid || dims[3] < grid {
            return Err(TensorError::dim(op, format!("grid {grid} larger than spatial size {}x{}", dims[2], dims[3])));
        }
        Ok(dims)
    }

    /// Mean over `grid × grid` contiguous bins with boundaries at `floor(i·H/grid)`.
    pub fn adaptive_avg_pool(&mut self, input: Var, grid: usize) -> Result<Var, TensorError> {
        const OP: &str = "adaptive_avg_pool";
        let [n, c, h, w] = self.check_grid(input, grid, OP)?;
        let x = self.value_checked(input, OP)?;
        let mut out = Vec::with_capacity(n * c * grid * grid);
        for plane in x.chunks(h * w) {
            for by in 0..grid {
                let (y0, y1) = bin_bounds(by, h, grid);
                for bx in 0..grid {
                    let (x0, x1) = bin_bounds(bx, w, grid);
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        acc += plane[y * w + x0..y * w + x1].iter().sum::<f64>();
                    }
                    out.push(acc / ((y1 - y0) * (x1 - x0)) as f64);
                }
            }
        }
        Ok(self.push(vec![n, c, grid, grid], Cow::Owned(out), Op::AdaptiveAvgPool { input, grid }))
    }

    /// Max over the same bins as [`Tape::adaptive_avg_pool`]; the first maximum wins.
    pub fn adaptive_max_pool(&mut self, input: Var, grid: usize) -> Result<Var, TensorError> {
        const OP: &str = "adaptive_max_pool";
        let [n, c, h, w] = self.check_grid(input, grid, OP)?;
        let x = self.value_checked(input, OP)?;
        let mut out = Vec::with_capacity(n * c * grid * grid);
        let mut argmax = Vec::with_capacity(n * c * grid * grid);
        for (pi, plane) in x.chunks(h * w).enumerate() {
            for by in 0..grid {
                let (y0, y1) = bin_bounds(by, h, grid);
                for bx in 0..grid {
                    let (x0, x1) = bin_bounds(bx, w, grid);
                    let mut best = (f64::NEG_INFINITY, y0 * w + x0);
                    for y in y0..y1 {
                        for xx in x0..x1 {
                            let v = plane[y * w + xx];
                            if v > best.0 {
                                best = (v, y * w + xx);
                            }
                        }
                    }
                    out.push(best.0);
                    argmax.push(pi * h * w + best.1);
                }
            }
        }
        Ok(self.push(vec![n, c, grid, grid], Cow::Owned(out), Op::AdaptiveMaxPool { input, argmax }))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var, TensorError> {
        if numel(shape) != numel(self.shape(input)) {
            return Err(TensorError::dim(
                "reshape",
                format!("cannot view {:?} as {shape:?}", self.shape(input)),
            ));
        }
        let value = self.value_checked(input, "reshape")?.to_vec();
        Ok(self.push(shape.to_vec(), Cow::Owned(value), Op::Reshape(input)))
    }

    /// `[N, ...] -> [N, rest]`.
    pub fn flatten(&mut self, input: Var) -> Result<Var, TensorError> {
        let s = self.shape(input);
        let n = s[0];
        let rest = numel(&s[1..]);
        self.reshape(input, &[n, rest])
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.value(input).iter().sum::<f64>();
        self.push(vec![1], Cow::Owned(vec![s]), Op::Sum(input))
    }

    /// `Σ weights[i] · x[i]`, a scalar.
    pub fn dot_const(&mut self, input: Var, weights: Vec<f64>) -> Result<Var, TensorError> {
        if weights.len() != self.value(input).len() {
            return Err(TensorError::dim("dot_const", format!("{} weights for {} values", weights.len(), self.value(input).len())));
        }
        let s = self.value(input).iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>();
        Ok(self.push(vec![1], Cow::Owned(vec![s]), Op::Dot { input, weights }))
    }

    /// Mean squared error of a prediction vector against fixed targets.
    pub fn mse_loss(&mut self, pred: Var, target: &[f64]) -> Result<Var, TensorError> {
        let v = loss::mse_loss(self.value(pred), target).map_err(|e| TensorError::Usage(format!("{e}")))?;
        Ok(self.push(vec![1], Cow::Owned(vec![v]), Op::MseLoss { pred, target: target.to_vec() }))
    }

    /// Pairwise softplus ranking loss over non-tied target pairs.
    pub fn rank_loss(&mut self, pred: Var, target: &[f64]) -> Result<Var, TensorError> {
        let v = loss::rank_loss(self.value(pred), target).map_err(|e| TensorError::Usage(format!("{e}")))?;
        Ok(self.push(vec![1], Cow::Owned(vec![v.value]), Op::RankLoss { pred, target: target.to_vec() }))
    }

    // ----------------------------------------------------------- backward

    /// Accumulates `d(loss)/d(leaf)` into every reachable leaf that requires a gradient.
    ///
    /// Intermediate gradients are recomputed on each call, so calling twice
    /// without [`Tape::zero_grad`] doubles the leaf gradients.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if !self.grad_enabled {
            return Err(TensorError::Usage("backward on an inference tape".into()));
        }
        if self.value(loss).len() != 1 {
            return Err(TensorError::Usage(format!("backward needs a scalar loss, got shape {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        let nodes = &self.nodes;
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.needs_grad {
                continue;
            }
            let lower = &mut grads[..id];
            match &node.op {
                Op::Leaf => {
                    match &mut self.leaf_grads[id] {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                        empty => *empty = Some(g),
                    }
                }
                Op::Conv2d { input, weight, bias, geom, out_channels } => {
                    let n = nodes[input.0].shape[0];
                    let x = &nodes[input.0].value;
                    let w = &nodes[weight.0].value;
                    let mut dx = take(lower, nodes, *input);
                    let mut dw = take(lower, nodes, *weight);
                    let mut db = bias.and_then(|b| take(lower, nodes, b));
                    kernels::conv2d_backward(
                        x,
                        n,
                        w,
                        *out_channels,
                        geom,
                        &g,
                        dx.as_deref_mut(),
                        dw.as_deref_mut(),
                        db.as_deref_mut(),
                    );
                    give(lower, *input, dx);
                    give(lower, *weight, dw);
                    if let Some(b) = bias {
                        give(lower, *b, db);
                    }
                }
                Op::GroupNorm { input, gamma, beta, groups, xhat, rstd } => {
                    let [n, c, h, w]: [usize; 4] = nodes[input.0].shape[..].try_into().expect("nchw");
                    let hw = h * w;
                    let cpg = c / groups;
                    let gm = &nodes[gamma.0].value;
                    if let Some(dgm) = slot(lower, nodes, *gamma) {
                        for (i, (gv, xv)) in g.iter().zip(xhat).enumerate() {
                            dgm[(i / hw) % c] += gv * xv;
                        }
                    }
                    if let Some(dbt) = slot(lower, nodes, *beta) {
                        for (i, gv) in g.iter().enumerate() {
                            dbt[(i / hw) % c] += gv;
                        }
                    }
                    if let Some(dx) = slot(lower, nodes, *input) {
                        let gsz = (cpg * hw) as f64;
                        for s in 0..n {
                            for grp in 0..*groups {
                                let base = (s * c + grp * cpg) * hw;
                                let mut sum_d = 0.0;
                                let mut sum_dx = 0.0;
                                for ci in 0..cpg {
                                    let gch = gm[grp * cpg + ci];
                                    for p in 0..hw {
                                        let i = base + ci * hw + p;
                                        let d = g[i] * gch;
                                        sum_d += d;
                                        sum_dx += d * xhat[i];
                                    }
                                }
                                let mean_d = sum_d / gsz;
                                let mean_dx = sum_dx / gsz;
                                let r = rstd[s * groups + grp];
                                for ci in 0..cpg {
                                    let gch = gm[grp * cpg + ci];
                                    for p in 0..hw {
                                        let i = base + ci * hw + p;
                                        dx[i] += r * (g[i] * gch - mean_d - xhat[i] * mean_dx);
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Relu(x) => {
                    let xv = &nodes[x.0].value;
                    if let Some(dx) = slot(lower, nodes, *x) {
                        for ((d, gv), v) in dx.iter_mut().zip(&g).zip(xv.iter()) {
                            if *v > 0.0 {
                                *d += gv;
                            }
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let y = &node.value;
                    if let Some(dx) = slot(lower, nodes, *x) {
                        for ((d, gv), yv) in dx.iter_mut().zip(&g).zip(y.iter()) {
                            *d += gv * yv * (1.0 - yv);
                        }
                    }
                }
                Op::Softplus(x) => {
                    let xv = &nodes[x.0].value;
                    if let Some(dx) = slot(lower, nodes, *x) {
                        for ((d, gv), v) in dx.iter_mut().zip(&g).zip(xv.iter()) {
                            *d += gv * math::sigmoid(*v);
                        }
                    }
                }
                Op::Scale(x, f) => {
                    if let Some(dx) = slot(lower, nodes, *x) {
                        dx.iter_mut().zip(&g).for_each(|(d, gv)| *d += gv * f);
                    }
                }
                Op::Dropout { input, mask } => {
                    if let Some(dx) = slot(lower, nodes, *input) {
                        for ((d, gv), m) in dx.iter_mut().zip(&g).zip(mask) {
                            *d += gv * m;
                        }
                    }
                }
                Op::Linear { input, weight, bias } => {
                    let &[b, fin] = &nodes[input.0].shape[..] else { unreachable!() };
                    let fout = nodes[weight.0].shape[0];
                    let x = &nodes[input.0].value;
                    let w = &nodes[weight.0].value;
                    if let Some(dx) = slot(lower, nodes, *input) {
                        // dX(b×in) += dY(b×out) · W(out×in)
                        kernels::gemm(b, fout, fin, &g, (fout as isize, 1), w, (fin as isize, 1), 1.0, dx);
                    }
                    if let Some(dw) = slot(lower, nodes, *weight) {
                        // dW(out×in) += dYᵀ(out×b) · X(b×in)
                        kernels::gemm(fout, b, fin, &g, (1, fout as isize), x, (fin as isize, 1), 1.0, dw);
                    }
                    if let Some(db) = bias.and_then(|b| slot(lower, nodes, b)) {
                        for row in g.chunks(fout) {
                            db.iter_mut().zip(row).for_each(|(d, gv)| *d += gv);
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        if let Some(d) = slot(lower, nodes, v) {
                            d.iter_mut().zip(&g).for_each(|(d, gv)| *d += gv);
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    if let Some(da) = slot(lower, nodes, *a) {
                        for ((d, gv), y) in da.iter_mut().zip(&g).zip(bv.iter()) {
                            *d += gv * y;
                        }
                    }
                    if let Some(db) = slot(lower, nodes, *b) {
                        for ((d, gv), x) in db.iter_mut().zip(&g).zip(av.iter()) {
                            *d += gv * x;
                        }
                    }
                }
                Op::ScaleChannels { input, gate } => {
                    let hw = nodes[input.0].shape[2] * nodes[input.0].shape[3];
                    let x = &nodes[input.0].value;
                    let gt = &nodes[gate.0].value;
                    if let Some(dx) = slot(lower, nodes, *input) {
                        for (i, gv) in gt.iter().enumerate() {
                            for p in i * hw..(i + 1) * hw {
                                dx[p] += g[p] * gv;
                            }
                        }
                    }
                    if let Some(dg) = slot(lower, nodes, *gate) {
                        for (i, d) in dg.iter_mut().enumerate() {
                            *d += (i * hw..(i + 1) * hw).map(|p| g[p] * x[p]).sum::<f64>();
                        }
                    }
                }
                Op::Concat { inputs, axis } => {
                    let base = &node.shape;
                    let outer: usize = base[..*axis].iter().product();
                    let inner: usize = base[axis + 1..].iter().product();
                    let total = base[*axis] * inner;
                    let mut offset = 0;
                    for v in inputs {
                        let blk = nodes[v.0].shape[*axis] * inner;
                        if let Some(d) = slot(lower, nodes, *v) {
                            for o in 0..outer {
                                let src = &g[o * total + offset..o * total + offset + blk];
                                d[o * blk..(o + 1) * blk].iter_mut().zip(src).for_each(|(d, gv)| *d += gv);
                            }
                        }
                        offset += blk;
                    }
                }
                Op::GlobalAvgPool(x) => {
                    let s = &nodes[x.0].shape;
                    let hw = s[2] * s[3];
                    if let Some(dx) = slot(lower, nodes, *x) {
                        for (i, gv) in g.iter().enumerate() {
                            let share = gv / hw as f64;
                            dx[i * hw..(i + 1) * hw].iter_mut().for_each(|d| *d += share);
                        }
                    }
                }
                Op::AdaptiveAvgPool { input, grid } => {
                    let s = &nodes[input.0].shape;
                    let (h, w) = (s[2], s[3]);
                    let grid = *grid;
                    if let Some(dx) = slot(lower, nodes, *input) {
                        for (pi, plane) in dx.chunks_mut(h * w).enumerate() {
                            for by in 0..grid {
                                let (y0, y1) = bin_bounds(by, h, grid);
                                for bx in 0..grid {
                                    let (x0, x1) = bin_bounds(bx, w, grid);
                                    let share = g[(pi * grid + by) * grid + bx] / ((y1 - y0) * (x1 - x0)) as f64;
                                    for y in y0..y1 {
                                        plane[y * w + x0..y * w + x1].iter_mut().for_each(|d| *d += share);
                                    }
                                }
                            }
                        }
                    }
                }
                Op::AdaptiveMaxPool { input, argmax } => {
                    if let Some(dx) = slot(lower, nodes, *input) {
                        for (gv, &src) in g.iter().zip(argmax) {
                            dx[src] += gv;
                        }
                    }
                }
                Op::Reshape(x) => {
                    if let Some(dx) = slot(lower, nodes, *x) {
                        dx.iter_mut().zip(&g).for_each(|(d, gv)| *d += gv);
                    }
                }
                Op::Sum(x) => {
                    if let Some(dx) = slot(lower, nodes, *x) {
                        dx.iter_mut().for_each(|d| *d += g[0]);
                    }
                }
                Op::Dot { input, weights } => {
                    if let Some(dx) = slot(lower, nodes, *input) {
                        dx.iter_mut().zip(weights).for_each(|(d, w)| *d += g[0] * w);
                    }
                }
                Op::MseLoss { pred, target } => {
                    let p = &nodes[pred.0].value;
                    if let Some(dp) = slot(lower, nodes, *pred) {
                        loss::mse_loss_grad(p, target, g[0], dp);
                    }
                }
                Op::RankLoss { pred, target } => {
                    let p = &nodes[pred.0].value;
                    if let Some(dp) = slot(lower, nodes, *pred) {
                        loss::rank_loss_grad(p, target, g[0], dp);
                    }
                }
            }
        }
        Ok(())
    }
}
