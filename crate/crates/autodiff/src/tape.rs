//! Recorded forward computation and its reverse pass.

use rand::Rng;

use crate::error::{AutodiffError, Result};
use crate::gemm::gemm;
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Train,
    Eval,
}

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Per-channel running statistics of a batchnorm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn patch(&self) -> usize {
        self.c * self.k * self.k
    }
    fn out_pixels(&self) -> usize {
        self.ho * self.wo
    }
}

enum Op {
    Leaf,
    Linear { x: Var, w: Var, b: Var },
    Conv2d { x: Var, w: Var, b: Var, g: ConvGeom },
    Relu { x: Var },
    Sigmoid { x: Var },
    MaxPool { x: Var, argmax: Vec<usize> },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64>, mode: Mode },
    Dropout { x: Var, mask: Vec<f64> },
    Upsample { x: Var, factor: usize },
    Reshape { x: Var },
    Add { a: Var, b: Var },
    Scale { x: Var, c: f64 },
    Sum { x: Var },
    Mean { x: Var },
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    SoftmaxKl { logits: Var, target_probs: Vec<f64>, probs: Vec<f64> },
    GaussianKl { mu: Var, logvar: Var },
    Reparam { mu: Var, logvar: Var, eps: Vec<f64> },
    BceLogits { logits: Var, target: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Single-threaded record of executed operations in topological order.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn shape_err(op: &'static str, lhs: &[usize], rhs: &[usize]) -> AutodiffError {
    AutodiffError::Shape {
        op,
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn invalid(op: &'static str, message: impl Into<String>) -> AutodiffError {
    AutodiffError::Invalid {
        op,
        message: message.into(),
    }
}

fn dims4(op: &'static str, s: &[usize]) -> Result<(usize, usize, usize, usize)> {
    match *s {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(invalid(op, format!("expected a 4-axis NCHW tensor, got {s:?}"))),
    }
}

fn dims2(op: &'static str, s: &[usize]) -> Result<(usize, usize)> {
    match *s {
        [n, k] => Ok((n, k)),
        _ => Err(invalid(op, format!("expected a 2-axis tensor, got {s:?}"))),
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^v)` without overflow.
fn softplus(v: f64) -> f64 {
    if v > 0.0 {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}

/// Row-wise log-softmax of a `[N, K]` buffer.
fn log_softmax_rows(data: &[f64], k: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(data.len());
    for row in data.chunks(k) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        out.extend(row.iter().map(|&v| v - lse));
    }
    out
}

/// Unrolls one image `[C, H, W]` into a `[C·k·k, Ho·Wo]` patch matrix.
fn im2col(x: &[f64], g: &ConvGeom, cols: &mut [f64]) {
    let hw = g.out_pixels();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = &mut cols[((c * g.k + ki) * g.k + kj) * hw..][..hw];
                for oh in 0..g.ho {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    let dst = &mut row[oh * g.wo..(oh + 1) * g.wo];
                    if ih < 0 || ih >= g.h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    for (ow, d) in dst.iter_mut().enumerate() {
                        let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                        *d = if iw < 0 || iw >= g.w as isize { 0.0 } else { src[iw as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the image.
fn col2im(cols: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let hw = g.out_pixels();
    for c in 0..g.c {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = &cols[((c * g.k + ki) * g.k + kj) * hw..][..hw];
                for oh in 0..g.ho {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    for ow in 0..g.wo {
                        let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                        if iw >= 0 && iw < g.w as isize {
                            dst[iw as usize] += row[oh * g.wo + ow];
                        }
                    }
                }
            }
        }
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, delta: Vec<f64>) {
    match slot {
        Some(g) => {
            for (a, d) in g.iter_mut().zip(delta) {
                *a += d;
            }
        }
        None => *slot = Some(delta),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: op_name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an input. Gradients are produced only for leaves marked
    /// `requires_grad` and for values computed from them.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op: "leaf" });
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    /// `x [N, in] · Wᵀ + b` with `W [out, in]`, `b [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, inp) = dims2("linear", self.shape(x))?;
        let (out, win) = dims2("linear", self.shape(w))?;
        if win != inp {
            return Err(shape_err("linear", self.shape(x), self.shape(w)));
        }
        if self.shape(b) != [out] {
            return Err(shape_err("linear", self.shape(w), self.shape(b)));
        }
        let mut y = Vec::with_capacity(n * out);
        for _ in 0..n {
            y.extend_from_slice(self.data(b));
        }
        gemm(n, inp, out, 1.0, self.data(x), (inp, 1), self.data(w), (1, inp), 1.0, &mut y, (out, 1));
        self.push("linear", Tensor::new(vec![n, out], y)?, Op::Linear { x, w, b }, &[x, w, b])
    }

    /// 2-D convolution of `x [N, C, H, W]` with square kernels `w [O, C, k, k]`
    /// and bias `b [O]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (n, c, h, wd) = dims4("conv2d", self.shape(x))?;
        let (o, wc, k, k2) = dims4("conv2d", self.shape(w))?;
        if wc != c || k != k2 {
            return Err(shape_err("conv2d", self.shape(x), self.shape(w)));
        }
        if self.shape(b) != [o] {
            return Err(shape_err("conv2d", self.shape(w), self.shape(b)));
        }
        if stride == 0 || h + 2 * pad < k || wd + 2 * pad < k {
            return Err(invalid("conv2d", format!("kernel {k} stride {stride} pad {pad} on {h}x{wd}")));
        }
        let ho = (h + 2 * pad - k) / stride + 1;
        let wo = (wd + 2 * pad - k) / stride + 1;
        let g = ConvGeom { n, c, h, w: wd, o, k, stride, pad, ho, wo };
        let (patch, hw) = (g.patch(), g.out_pixels());
        let mut cols = vec![0.0; patch * hw];
        let mut y = vec![0.0; n * o * hw];
        let (xd, wdata, bd) = (self.data(x), self.data(w), self.data(b));
        for i in 0..n {
            im2col(&xd[i * c * h * wd..(i + 1) * c * h * wd], &g, &mut cols);
            let out = &mut y[i * o * hw..(i + 1) * o * hw];
            for (oc, chunk) in out.chunks_mut(hw).enumerate() {
                chunk.fill(bd[oc]);
            }
            gemm(o, patch, hw, 1.0, wdata, (patch, 1), &cols, (hw, 1), 1.0, out, (hw, 1));
        }
        self.push("conv2d", Tensor::new(vec![n, o, ho, wo], y)?, Op::Conv2d { x, w, b, g }, &[x, w, b])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let y: Vec<f64> = self.data(x).iter().map(|&v| v.max(0.0)).collect();
        self.push("relu", Tensor::new(self.shape(x).to_vec(), y)?, Op::Relu { x }, &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let y: Vec<f64> = self.data(x).iter().map(|&v| sigmoid(v)).collect();
        self.push("sigmoid", Tensor::new(self.shape(x).to_vec(), y)?, Op::Sigmoid { x }, &[x])
    }

    /// Max pooling over `kernel × kernel` windows without padding.
    pub fn maxpool2d(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        let (n, c, h, w) = dims4("maxpool2d", self.shape(x))?;
        if kernel == 0 || stride == 0 || kernel > h || kernel > w {
            return Err(invalid("maxpool2d", format!("kernel {kernel} stride {stride} on {h}x{w}")));
        }
        let ho = (h - kernel) / stride + 1;
        let wo = (w - kernel) / stride + 1;
        let xd = self.data(x);
        let mut y = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        for plane in 0..n * c {
            let base = plane * h * w;
            for oh in 0..ho {
                for ow in 0..wo {
                    let mut best = base + oh * stride * w + ow * stride;
                    for ki in 0..kernel {
                        for kj in 0..kernel {
                            let idx = base + (oh * stride + ki) * w + ow * stride + kj;
                            if xd[idx] > xd[best] {
                                best = idx;
                            }
                        }
                    }
                    y.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
        self.push("maxpool2d", Tensor::new(vec![n, c, ho, wo], y)?, Op::MaxPool { x, argmax }, &[x])
    }

    /// Per-channel batch normalization of `x [N, C, H, W]`. In train mode the
    /// batch statistics normalize and `running` is updated with momentum 0.1
    /// (unbiased variance); in eval mode `running` normalizes.
    pub fn batchnorm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running: &mut RunningStats,
        mode: Mode,
    ) -> Result<Var> {
        let (n, c, h, w) = dims4("batchnorm2d", self.shape(x))?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(shape_err("batchnorm2d", self.shape(x), self.shape(gamma)));
        }
        if running.mean.len() != c || running.var.len() != c {
            return Err(shape_err("batchnorm2d", self.shape(x), &[running.mean.len()]));
        }
        let hw = h * w;
        let m = (n * hw) as f64;
        let xd = self.data(x);
        let (mut mean, mut var) = (vec![0.0; c], vec![0.0; c]);
        match mode {
            Mode::Train => {
                for i in 0..n {
                    for ch in 0..c {
                        mean[ch] += xd[(i * c + ch) * hw..][..hw].iter().sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|v| *v /= m);
                for i in 0..n {
                    for ch in 0..c {
                        var[ch] += xd[(i * c + ch) * hw..][..hw]
                            .iter()
                            .map(|&v| (v - mean[ch]) * (v - mean[ch]))
                            .sum::<f64>();
                    }
                }
                var.iter_mut().for_each(|v| *v /= m);
            }
            Mode::Eval => {
                mean.clone_from(&running.mean);
                var.clone_from(&running.var);
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let (gd, bd) = (self.data(gamma), self.data(beta));
        let mut xhat = vec![0.0; xd.len()];
        let mut y = vec![0.0; xd.len()];
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * hw;
                for j in off..off + hw {
                    xhat[j] = (xd[j] - mean[ch]) * inv_std[ch];
                    y[j] = gd[ch] * xhat[j] + bd[ch];
                }
            }
        }
        if mode == Mode::Train {
            let unbias = if m > 1.0 { m / (m - 1.0) } else { 1.0 };
            for ch in 0..c {
                running.mean[ch] = (1.0 - BN_MOMENTUM) * running.mean[ch] + BN_MOMENTUM * mean[ch];
                running.var[ch] = (1.0 - BN_MOMENTUM) * running.var[ch] + BN_MOMENTUM * var[ch] * unbias;
            }
        }
        let shape = self.shape(x).to_vec();
        self.push(
            "batchnorm2d",
            Tensor::new(shape, y)?,
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, mode },
            &[x, gamma, beta],
        )
    }

    /// Inverted dropout: in train mode each entry is zeroed with probability
    /// `rate` and survivors are scaled by `1/(1−rate)`. Eval mode is identity.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, mode: Mode, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(invalid("dropout", format!("rate {rate} outside [0, 1)")));
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = match mode {
            Mode::Train if rate > 0.0 => (0..self.value(x).len())
                .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                .collect(),
            _ => vec![1.0; self.value(x).len()],
        };
        let y: Vec<f64> = self.data(x).iter().zip(&mask).map(|(a, m)| a * m).collect();
        self.push("dropout", Tensor::new(self.shape(x).to_vec(), y)?, Op::Dropout { x, mask }, &[x])
    }

    /// Nearest-neighbour upsampling of `[N, C, H, W]` by an integer factor.
    pub fn upsample_nearest(&mut self, x: Var, factor: usize) -> Result<Var> {
        let (n, c, h, w) = dims4("upsample_nearest", self.shape(x))?;
        if factor == 0 {
            return Err(invalid("upsample_nearest", "factor 0"));
        }
        let (ho, wo) = (h * factor, w * factor);
        let xd = self.data(x);
        let mut y = Vec::with_capacity(n * c * ho * wo);
        for plane in 0..n * c {
            for i in 0..ho {
                let row = &xd[plane * h * w + (i / factor) * w..][..w];
                for j in 0..wo {
                    y.push(row[j / factor]);
                }
            }
        }
        self.push(
            "upsample_nearest",
            Tensor::new(vec![n, c, ho, wo], y)?,
            Op::Upsample { x, factor },
            &[x],
        )
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        self.push("reshape", t, Op::Reshape { x }, &[x])
    }

    /// Collapses every axis after the first.
    pub fn flatten(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        let shape = [s[0], s[1..].iter().product()];
        self.reshape(x, &shape)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("add", self.shape(a), self.shape(b)));
        }
        let y: Vec<f64> = self.data(a).iter().zip(self.data(b)).map(|(p, q)| p + q).collect();
        self.push("add", Tensor::new(self.shape(a).to_vec(), y)?, Op::Add { a, b }, &[a, b])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let y: Vec<f64> = self.data(x).iter().map(|&v| v * c).collect();
        self.push("scale", Tensor::new(self.shape(x).to_vec(), y)?, Op::Scale { x, c }, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.data(x).iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum { x }, &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let s = self.data(x).iter().sum::<f64>() / self.value(x).len() as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean { x }, &[x])
    }

    /// Per-sample `−log softmax(logits)[target]`, shape `[N]`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (n, k) = dims2("softmax_cross_entropy", self.shape(logits))?;
        if targets.len() != n {
            return Err(shape_err("softmax_cross_entropy", self.shape(logits), &[targets.len()]));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= k) {
            return Err(invalid("softmax_cross_entropy", format!("target {t} with {k} classes")));
        }
        let ls = log_softmax_rows(self.data(logits), k);
        let y: Vec<f64> = targets.iter().enumerate().map(|(i, &t)| -ls[i * k + t]).collect();
        let probs = ls.iter().map(|v| v.exp()).collect();
        self.push(
            "softmax_cross_entropy",
            Tensor::new(vec![n], y)?,
            Op::CrossEntropy { logits, targets: targets.to_vec(), probs },
            &[logits],
        )
    }

    /// Per-sample `KL[softmax(target) ‖ softmax(logits)]` in nats, shape `[N]`.
    /// The target logits are treated as constants.
    pub fn softmax_kl(&mut self, target_logits: &Tensor, logits: Var) -> Result<Var> {
        let (n, k) = dims2("softmax_kl", self.shape(logits))?;
        if target_logits.shape() != self.shape(logits) {
            return Err(shape_err("softmax_kl", target_logits.shape(), self.shape(logits)));
        }
        let lt = log_softmax_rows(target_logits.data(), k);
        let ll = log_softmax_rows(self.data(logits), k);
        let target_probs: Vec<f64> = lt.iter().map(|v| v.exp()).collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                (i * k..(i + 1) * k)
                    .filter(|&j| target_probs[j] > 0.0)
                    .map(|j| target_probs[j] * (lt[j] - ll[j]))
                    .sum()
            })
            .collect();
        let probs = ll.iter().map(|v| v.exp()).collect();
        self.push(
            "softmax_kl",
            Tensor::new(vec![n], y)?,
            Op::SoftmaxKl { logits, target_probs, probs },
            &[logits],
        )
    }

    /// Per-sample `KL[N(μ, σ²) ‖ N(0, I)] = ½ Σ (μ² + σ² − 1 − log σ²)` in nats,
    /// shape `[N]`.
    pub fn kl_diag_gaussian_vs_standard(&mut self, mu: Var, logvar: Var) -> Result<Var> {
        let (n, d) = dims2("kl_diag_gaussian", self.shape(mu))?;
        if self.shape(logvar) != self.shape(mu) {
            return Err(shape_err("kl_diag_gaussian", self.shape(mu), self.shape(logvar)));
        }
        let (md, ld) = (self.data(mu), self.data(logvar));
        let y: Vec<f64> = (0..n)
            .map(|i| {
                0.5 * (i * d..(i + 1) * d)
                    .map(|j| md[j] * md[j] + ld[j].exp() - 1.0 - ld[j])
                    .sum::<f64>()
            })
            .collect();
        self.push("kl_diag_gaussian", Tensor::new(vec![n], y)?, Op::GaussianKl { mu, logvar }, &[mu, logvar])
    }

    /// `μ + exp(½ log σ²) · ε` for caller-supplied standard normal noise `ε`.
    pub fn reparameterize(&mut self, mu: Var, logvar: Var, eps: &Tensor) -> Result<Var> {
        if self.shape(logvar) != self.shape(mu) {
            return Err(shape_err("reparameterize", self.shape(mu), self.shape(logvar)));
        }
        if eps.shape() != self.shape(mu) {
            return Err(shape_err("reparameterize", self.shape(mu), eps.shape()));
        }
        let y: Vec<f64> = self
            .data(mu)
            .iter()
            .zip(self.data(logvar))
            .zip(eps.data())
            .map(|((m, l), e)| m + (0.5 * l).exp() * e)
            .collect();
        self.push(
            "reparameterize",
            Tensor::new(self.shape(mu).to_vec(), y)?,
            Op::Reparam { mu, logvar, eps: eps.data().to_vec() },
            &[mu, logvar],
        )
    }

    /// Per-sample Bernoulli negative log-likelihood of `target ∈ [0,1]` under
    /// `sigmoid(logits)`, summed over all non-batch axes, shape `[N]`.
    /// Evaluated from the logits so saturated pixels stay finite.
    pub fn bce_with_logits(&mut self, logits: Var, target: &Tensor) -> Result<Var> {
        if target.shape() != self.shape(logits) {
            return Err(shape_err("bce_with_logits", self.shape(logits), target.shape()));
        }
        let n = self.shape(logits)[0];
        let per = self.value(logits).len() / n;
        let ld = self.data(logits);
        let y: Vec<f64> = (0..n)
            .map(|i| {
                (i * per..(i + 1) * per)
                    .map(|j| softplus(ld[j]) - target.data()[j] * ld[j])
                    .sum()
            })
            .collect();
        self.push(
            "bce_with_logits",
            Tensor::new(vec![n], y)?,
            Op::BceLogits { logits, target: target.data().to_vec() },
            &[logits],
        )
    }

    /// Reverse pass from a scalar `loss`. Every node is visited once, in
    /// reverse recording order.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let shape = self.shape(loss);
        if shape.iter().product::<usize>() != 1 {
            return Err(AutodiffError::NonScalarLoss(shape.to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }
        for idx in (0..=loss.0).rev() {
            let Some(gy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.backward_node(node, &gy, &mut grads);
            grads[idx] = Some(gy);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, node)| g.map(|d| Tensor::new(node.value.shape().to_vec(), d).expect("gradient shape")))
            .collect();
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_node(&self, node: &Node, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (n, inp) = (self.shape(*x)[0], self.shape(*x)[1]);
                let out = self.shape(*w)[0];
                if self.wants(*x) {
                    let mut dx = vec![0.0; n * inp];
                    gemm(n, out, inp, 1.0, gy, (out, 1), self.data(*w), (inp, 1), 0.0, &mut dx, (inp, 1));
                    accumulate(&mut grads[x.0], dx);
                }
                if self.wants(*w) {
                    let mut dw = vec![0.0; out * inp];
                    gemm(out, n, inp, 1.0, gy, (1, out), self.data(*x), (inp, 1), 0.0, &mut dw, (inp, 1));
                    accumulate(&mut grads[w.0], dw);
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; out];
                    for row in gy.chunks(out) {
                        for (d, g) in db.iter_mut().zip(row) {
                            *d += g;
                        }
                    }
                    accumulate(&mut grads[b.0], db);
                }
            }
            Op::Conv2d { x, w, b, g } => {
                let (patch, hw) = (g.patch(), g.out_pixels());
                let img = g.c * g.h * g.w;
                let (wx, ww) = (self.wants(*x), self.wants(*w));
                let mut cols = vec![0.0; patch * hw];
                let mut dcols = vec![0.0; patch * hw];
                let mut dx = if wx { vec![0.0; g.n * img] } else { Vec::new() };
                let mut dw = if ww { vec![0.0; g.o * patch] } else { Vec::new() };
                let xd = self.data(*x);
                for i in 0..g.n {
                    let gout = &gy[i * g.o * hw..(i + 1) * g.o * hw];
                    if ww {
                        // Patches are rebuilt here rather than kept from the forward pass.
                        im2col(&xd[i * img..(i + 1) * img], g, &mut cols);
                        gemm(g.o, hw, patch, 1.0, gout, (hw, 1), &cols, (1, hw), 1.0, &mut dw, (patch, 1));
                    }
                    if wx {
                        gemm(patch, g.o, hw, 1.0, self.data(*w), (1, patch), gout, (hw, 1), 0.0, &mut dcols, (hw, 1));
                        col2im(&dcols, g, &mut dx[i * img..(i + 1) * img]);
                    }
                }
                if wx {
                    accumulate(&mut grads[x.0], dx);
                }
                if ww {
                    accumulate(&mut grads[w.0], dw);
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; g.o];
                    for (j, chunk) in gy.chunks(hw).enumerate() {
                        db[j % g.o] += chunk.iter().sum::<f64>();
                    }
                    accumulate(&mut grads[b.0], db);
                }
            }
            Op::Relu { x } => {
                if self.wants(*x) {
                    let d = gy.iter().zip(self.data(*x)).map(|(g, &v)| if v > 0.0 { *g } else { 0.0 }).collect();
                    accumulate(&mut grads[x.0], d);
                }
            }
            Op::Sigmoid { x } => {
                if self.wants(*x) {
                    let y = node.value.data();
                    let d = gy.iter().zip(y).map(|(g, s)| g * s * (1.0 - s)).collect();
                    accumulate(&mut grads[x.0], d);
                }
            }
            Op::MaxPool { x, argmax } => {
                if self.wants(*x) {
                    let mut d = vec![0.0; self.value(*x).len()];
                    for (g, &i) in gy.iter().zip(argmax) {
                        d[i] += g;
                    }
                    accumulate(&mut grads[x.0], d);
                }
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, mode } => {
                let s = self.shape(*x);
                let (n, c, hw) = (s[0], s[1], s[2] * s[3]);
                let m = (n * hw) as f64;
                let gd = self.data(*gamma);
                let (mut sum_dy, mut sum_dy_xhat) = (vec![0.0; c], vec![0.0; c]);
                for i in 0..n {
                    for ch in 0..c {
                        let off = (i * c + ch) * hw;
                        for j in off..off + hw {
                            sum_dy[ch] += gy[j];
                            sum_dy_xhat[ch] += gy[j] * xhat[j];
                        }
                    }
                }
                if self.wants(*x) {
                    let mut dx = vec![0.0; gy.len()];
                    for i in 0..n {
                        for ch in 0..c {
                            let off = (i * c + ch) * hw;
                            let k = gd[ch] * inv_std[ch];
                            for j in off..off + hw {
                                dx[j] = match mode {
                                    Mode::Train => k * (gy[j] - sum_dy[ch] / m - xhat[j] * sum_dy_xhat[ch] / m),
                                    Mode::Eval => k * gy[j],
                                };
                            }
                        }
                    }
                    accumulate(&mut grads[x.0], dx);
                }
                if self.wants(*gamma) {
                    accumulate(&mut grads[gamma.0], sum_dy_xhat);
                }
                if self.wants(*beta) {
                    accumulate(&mut grads[beta.0], sum_dy);
                }
            }
            Op::Dropout { x, mask } => {
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], gy.iter().zip(mask).map(|(g, m)| g * m).collect());
                }
            }
            Op::Upsample { x, factor } => {
                if self.wants(*x) {
                    let s = self.shape(*x);
                    let (h, w) = (s[2], s[3]);
                    let wo = w * factor;
                    let mut d = vec![0.0; self.value(*x).len()];
                    for (plane, chunk) in gy.chunks(h * factor * wo).enumerate() {
                        for (i, row) in chunk.chunks(wo).enumerate() {
                            let dst = &mut d[plane * h * w + (i / factor) * w..][..w];
                            for (j, g) in row.iter().enumerate() {
                                dst[j / factor] += g;
                            }
                        }
                    }
                    accumulate(&mut grads[x.0], d);
                }
            }
            Op::Reshape { x } => {
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], gy.to_vec());
                }
            }
            Op::Add { a, b } => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], gy.to_vec());
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], gy.to_vec());
                }
            }
            Op::Scale { x, c } => {
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], gy.iter().map(|g| g * c).collect());
                }
            }
            Op::Sum { x } => {
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], vec![gy[0]; self.value(*x).len()]);
                }
            }
            Op::Mean { x } => {
                if self.wants(*x) {
                    let n = self.value(*x).len();
                    accumulate(&mut grads[x.0], vec![gy[0] / n as f64; n]);
                }
            }
            Op::CrossEntropy { logits, targets, probs } => {
                if self.wants(*logits) {
                    let k = self.shape(*logits)[1];
                    let mut d = probs.clone();
                    for (i, &t) in targets.iter().enumerate() {
                        d[i * k + t] -= 1.0;
                        for v in &mut d[i * k..(i + 1) * k] {
                            *v *= gy[i];
                        }
                    }
                    accumulate(&mut grads[logits.0], d);
                }
            }
            Op::SoftmaxKl { logits, target_probs, probs } => {
                if self.wants(*logits) {
                    let k = self.shape(*logits)[1];
                    let d = probs
                        .iter()
                        .zip(target_probs)
                        .enumerate()
                        .map(|(j, (p, t))| gy[j / k] * (p - t))
                        .collect();
                    accumulate(&mut grads[logits.0], d);
                }
            }
            Op::GaussianKl { mu, logvar } => {
                let d = self.shape(*mu)[1];
                if self.wants(*mu) {
                    let dm = self.data(*mu).iter().enumerate().map(|(j, m)| gy[j / d] * m).collect();
                    accumulate(&mut grads[mu.0], dm);
                }
                if self.wants(*logvar) {
                    let dl = self
                        .data(*logvar)
                        .iter()
                        .enumerate()
                        .map(|(j, l)| gy[j / d] * 0.5 * (l.exp() - 1.0))
                        .collect();
                    accumulate(&mut grads[logvar.0], dl);
                }
            }
            Op::Reparam { mu, logvar, eps } => {
                if self.wants(*mu) {
                    accumulate(&mut grads[mu.0], gy.to_vec());
                }
                if self.wants(*logvar) {
                    let dl = gy
                        .iter()
                        .zip(self.data(*logvar))
                        .zip(eps)
                        .map(|((g, l), e)| g * 0.5 * (0.5 * l).exp() * e)
                        .collect();
                    accumulate(&mut grads[logvar.0], dl);
                }
            }
            Op::BceLogits { logits, target } => {
                if self.wants(*logits) {
                    let per = target.len() / gy.len();
                    let d = self
                        .data(*logits)
                        .iter()
                        .zip(target)
                        .enumerate()
                        .map(|(j, (l, t))| gy[j / per] * (sigmoid(*l) - t))
                        .collect();
                    accumulate(&mut grads[logits.0], d);
                }
            }
        }
    }
}
