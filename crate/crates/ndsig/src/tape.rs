//! Tape-based reverse-mode differentiation over [`Tensor1D`] values.
//!
//! Every operation evaluates eagerly and appends a node to the tape. Nodes
//! only reference earlier nodes, so the tape order is already a topological
//! order and [`Tape::backward`] is a single reverse sweep. A tape supports
//! one backward pass; build a fresh tape for the next evaluation.

use crate::error::{shape_err, EngineError, Result};
use crate::conv::{conv_forward, conv_grad_input, conv_grad_weight};
use crate::tensor::{axpy, dot, Tensor1D};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv1d {
        input: Var,
        weight: Var,
        bias: Var,
        kernel: usize,
        stride: usize,
    },
    Relu(Var),
    MaxPool {
        input: Var,
        argmax: Vec<usize>,
    },
    Gram(Var),
    MseSum(Var, Var),
    SumSquares(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    GlobalAvgPool(Var),
    Dense {
        input: Var,
        weight: Var,
        bias: Var,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        label: usize,
        probs: Vec<f64>,
    },
    Upsample {
        input: Var,
        factor: usize,
    },
    Crop {
        input: Var,
        start: usize,
    },
    Concat(Vec<Var>),
    ChannelNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor1D,
    op: Op,
    needs_grad: bool,
}

/// Records a computation for one backward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    consumed: bool,
}

/// Batch-norm epsilon used by [`Tape::channel_norm`].
pub const NORM_EPS: f64 = 1e-5;

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

    fn check(&self, v: Var) -> Result<&Node> {
        self.nodes.get(v.0).ok_or(EngineError::UnknownVar(v.0))
    }

    fn push(&mut self, value: Tensor1D, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].needs_grad)
    }

    /// Adds an input or parameter.
    pub fn leaf(&mut self, value: Tensor1D, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor1D) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor1D {
        &self.nodes[v.0].value
    }

    /// Gradient of the last backward root with respect to `v`, if `v` took
    /// part in the computation and requires a gradient.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Same-padded 1D convolution. `weight` has shape `(out, in * kernel)`,
    /// `bias` shape `(out, 1)`. Output length is `ceil(length / stride)`.
    pub fn conv1d(
        &mut self,
        input: Var,
        weight: Var,
        bias: Var,
        kernel: usize,
        stride: usize,
    ) -> Result<Var> {
        let x = &self.check(input)?.value;
        let w = &self.check(weight)?.value;
        let b = &self.check(bias)?.value;
        if kernel % 2 == 0 || stride == 0 {
            return Err(shape_err("conv1d", "kernel must be odd and stride positive"));
        }
        let cin = x.channels();
        let cout = w.channels();
        if w.length() != cin * kernel {
            return Err(shape_err(
                "conv1d",
                format!(
                    "input has {cin} channels but weights expect {}",
                    w.length() / kernel
                ),
            ));
        }
        if b.len() != cout {
            return Err(shape_err("conv1d", "bias length does not match out channels"));
        }
        if !w.all_finite() || !b.all_finite() {
            return Err(EngineError::NonFinite("conv1d parameters".into()));
        }
        let out = conv_forward(x, w.data(), b.data(), kernel, stride);
        let ng = self.ng(&[input, weight, bias]);
        Ok(self.push(
            out,
            Op::Conv1d {
                input,
                weight,
                bias,
                kernel,
                stride,
            },
            ng,
        ))
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        let x = &self.check(input)?.value;
        let data = x.data().iter().map(|&v| v.max(0.0)).collect();
        let out = Tensor1D::new(x.channels(), x.length(), data)?;
        let ng = self.ng(&[input]);
        Ok(self.push(out, Op::Relu(input), ng))
    }

    /// Non-overlapping max pooling along the length axis; a trailing
    /// remainder shorter than `window` is dropped. Ties go to the first
    /// position.
    pub fn max_pool1d(&mut self, input: Var, window: usize) -> Result<Var> {
        let x = &self.check(input)?.value;
        let (c, len) = x.shape();
        if window == 0 || window > len {
            return Err(shape_err(
                "max_pool1d",
                format!("window {window} invalid for length {len}"),
            ));
        }
        let out_len = len / window;
        let mut data = Vec::with_capacity(c * out_len);
        let mut argmax = Vec::with_capacity(c * out_len);
        for ch in 0..c {
            let row = x.channel(ch);
            for o in 0..out_len {
                let base = o * window;
                let mut best = base;
                for t in base + 1..base + window {
                    if row[t] > row[best] {
                        best = t;
                    }
                }
                data.push(row[best]);
                argmax.push(ch * len + best);
            }
        }
        let out = Tensor1D::new(c, out_len, data)?;
        let ng = self.ng(&[input]);
        Ok(self.push(out, Op::MaxPool { input, argmax }, ng))
    }

    /// Channel inner-product matrix `F Fᵀ` of a `(P, M)` feature map.
    pub fn gram(&mut self, input: Var) -> Result<Var> {
        let x = &self.check(input)?.value;
        let out = gram_matrix(x);
        let ng = self.ng(&[input]);
        Ok(self.push(out, Op::Gram(input), ng))
    }

    /// `Σ (a − b)²` over every channel and position.
    pub fn mse_sum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.check(a)?.value, &self.check(b)?.value);
        if va.shape() != vb.shape() {
            return Err(shape_err(
                "mse_sum",
                format!("{:?} vs {:?}", va.shape(), vb.shape()),
            ));
        }
        let s: f64 = va
            .data()
            .iter()
            .zip(vb.data())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        let ng = self.ng(&[a, b]);
        Ok(self.push(Tensor1D::scalar(s), Op::MseSum(a, b), ng))
    }

    pub fn sum_squares(&mut self, input: Var) -> Result<Var> {
        let x = &self.check(input)?.value;
        let s: f64 = x.data().iter().map(|v| v * v).sum();
        let ng = self.ng(&[input]);
        Ok(self.push(Tensor1D::scalar(s), Op::SumSquares(input), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_values("add", a, b, |x, y| x + y)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_values("sub", a, b, |x, y| x - y)?;
        let ng = self.ng(&[a, b]);
        Ok(self.push(out, Op::Sub(a, b), ng))
    }

    fn zip_values(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor1D> {
        let (va, vb) = (&self.check(a)?.value, &self.check(b)?.value);
        if va.shape() != vb.shape() {
            return Err(shape_err(op, format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor1D::new(va.channels(), va.length(), data)
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Result<Var> {
        let x = &self.check(input)?.value;
        let data = x.data().iter().map(|v| v * factor).collect();
        let out = Tensor1D::new(x.channels(), x.length(), data)?;
        let ng = self.ng(&[input]);
        Ok(self.push(out, Op::Scale(input, factor), ng))
    }

    /// `(C, L)` to `(C, 1)` mean over length.
    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let x = &self.check(input)?.value;
        let inv = 1.0 / x.length() as f64;
        let data = (0..x.channels())
            .map(|c| x.channel(c).iter().sum::<f64>() * inv)
            .collect();
        let out = Tensor1D::new(x.channels(), 1, data)?;
        let ng = self.ng(&[input]);
        Ok(self.push(out, Op::GlobalAvgPool(input), ng))
    }

    /// Fully connected layer on a flattened input; `weight` is `(out, in)`,
    /// `bias` is `(out, 1)`. Output is `(out, 1)`.
    pub fn dense(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let x = &self.check(input)?.value;
        let w = &self.check(weight)?.value;
        let b = &self.check(bias)?.value;
        if w.length() != x.len() || b.len() != w.channels() {
            return Err(shape_err(
                "dense",
                format!(
                    "input {} / weight {:?} / bias {}",
                    x.len(),
                    w.shape(),
                    b.len()
                ),
            ));
        }
        let data = (0..w.channels())
            .map(|o| dot(w.channel(o), x.data()) + b.data()[o])
            .collect();
        let out = Tensor1D::new(w.channels(), 1, data)?;
        let ng = self.ng(&[input, weight, bias]);
        Ok(self.push(
            out,
            Op::Dense {
                input,
                weight,
                bias,
            },
            ng,
        ))
    }

    /// Negative log-softmax probability of `label`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let z = &self.check(logits)?.value;
        if label >= z.len() {
            return Err(shape_err(
                "softmax_cross_entropy",
                format!("label {label} out of {} classes", z.len()),
            ));
        }
        let probs = softmax(z.data());
        let loss = -(probs[label].max(f64::MIN_POSITIVE)).ln();
        let ng = self.ng(&[logits]);
        Ok(self.push(
            Tensor1D::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                probs,
            },
            ng,
        ))
    }

    /// Nearest-neighbour upsampling along length.
    pub fn upsample(&mut self, input: Var, factor: usize) -> Result<Var> {
        let x = &self.check(input)?.value;
        if factor == 0 {
            return Err(shape_err("upsample", "factor must be positive"));
        }
        let (c, len) = x.shape();
        let mut data = Vec::with_capacity(c * len * factor);
        for ch in 0..c {
            for &v in x.channel(ch) {
                data.extend(std::iter::repeat(v).take(factor));
            }
        }
        let out = Tensor1D::new(c, len * factor, data)?;
        let ng = self.ng(&[input]);
        Ok(self.push(out, Op::Upsample { input, factor }, ng))
    }

    /// Positions `start..start + len` of every channel.
    pub fn crop(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let x = &self.check(input)?.value;
        if len == 0 || start + len > x.length() {
            return Err(shape_err(
                "crop",
                format!("range {start}..{} exceeds length {}", start + len, x.length()),
            ));
        }
        let mut data = Vec::with_capacity(x.channels() * len);
        for ch in 0..x.channels() {
            data.extend_from_slice(&x.channel(ch)[start..start + len]);
        }
        let out = Tensor1D::new(x.channels(), len, data)?;
        let ng = self.ng(&[input]);
        Ok(self.push(out, Op::Crop { input, start }, ng))
    }

    /// Joins tensors with equal channel counts along length.
    pub fn concat(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| shape_err("concat", "no inputs"))?;
        let c = self.check(*first)?.value.channels();
        let mut total = 0;
        for &v in inputs {
            let t = &self.check(v)?.value;
            if t.channels() != c {
                return Err(shape_err("concat", "channel counts differ"));
            }
            total += t.length();
        }
        let mut data = Vec::with_capacity(c * total);
        for ch in 0..c {
            for &v in inputs {
                data.extend_from_slice(self.nodes[v.0].value.channel(ch));
            }
        }
        let out = Tensor1D::new(c, total, data)?;
        let ng = self.ng(inputs);
        Ok(self.push(out, Op::Concat(inputs.to_vec()), ng))
    }

    /// Per-channel normalisation over the length axis followed by an affine
    /// map (`gamma`, `beta` are `(C, 1)`). Applied to a concatenated batch
    /// this is training-mode batch normalisation.
    pub fn channel_norm(&mut self, input: Var, gamma: Var, beta: Var) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let x = &self.check(input)?.value;
        let g = &self.check(gamma)?.value;
        let b = &self.check(beta)?.value;
        let (c, len) = x.shape();
        if g.len() != c || b.len() != c {
            return Err(shape_err("channel_norm", "affine parameters do not match channels"));
        }
        let mut normalized = Vec::with_capacity(c * len);
        let mut inv_std = Vec::with_capacity(c);
        let mut means = Vec::with_capacity(c);
        let mut vars = Vec::with_capacity(c);
        let mut data = Vec::with_capacity(c * len);
        for ch in 0..c {
            let row = x.channel(ch);
            let mean = row.iter().sum::<f64>() / len as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len as f64;
            let is = 1.0 / (var + NORM_EPS).sqrt();
            for &v in row {
                let h = (v - mean) * is;
                normalized.push(h);
                data.push(g.data()[ch] * h + b.data()[ch]);
            }
            inv_std.push(is);
            means.push(mean);
            vars.push(var);
        }
        let out = Tensor1D::new(c, len, data)?;
        let ng = self.ng(&[input, gamma, beta]);
        let v = self.push(
            out,
            Op::ChannelNorm {
                input,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            ng,
        );
        Ok((v, means, vars))
    }

    /// Propagates gradients from the scalar `root` to every node that
    /// requires one. Fails if called twice on the same tape.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        if self.consumed {
            return Err(EngineError::GraphConsumed);
        }
        let rv = &self.check(root)?.value;
        if !rv.is_scalar() {
            return Err(EngineError::NonScalarRoot(rv.channels(), rv.length()));
        }
        if !rv.all_finite() {
            return Err(EngineError::NonFinite("backward root".into()));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(vec![1.0]);
        for idx in (0..=root.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let Some(gy) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &gy, &mut grads);
            grads[idx] = Some(gy);
        }
        for (i, g) in grads.iter_mut().enumerate() {
            if !self.nodes[i].needs_grad {
                *g = None;
            } else if g.is_none() && matches!(self.nodes[i].op, Op::Leaf) {
                *g = Some(vec![0.0; self.nodes[i].value.len()]);
            }
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(EngineError::NonFinite(format!("gradient of node {i}")));
                }
            }
        }
        self.grads = grads;
        Ok(())
    }

    fn backprop_node(&self, idx: usize, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let nodes = &self.nodes;
        let want = |v: Var| nodes[v.0].needs_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Conv1d {
                input,
                weight,
                bias,
                kernel,
                stride,
            } => {
                let x = &nodes[input.0].value;
                let w = &nodes[weight.0].value;
                let out_len = node.value.length();
                if want(*bias) {
                    let gb = slot(grads, *bias, nodes);
                    for (o, g) in gb.iter_mut().enumerate() {
                        *g += gy[o * out_len..(o + 1) * out_len].iter().sum::<f64>();
                    }
                }
                if want(*weight) {
                    let gw = slot(grads, *weight, nodes);
                    conv_grad_weight(x, gy, out_len, *kernel, *stride, gw);
                }
                if want(*input) {
                    let gx = slot(grads, *input, nodes);
                    conv_grad_input(x.shape(), w, gy, out_len, *kernel, *stride, gx);
                }
            }
            Op::Relu(input) => {
                if want(*input) {
                    let y = node.value.data();
                    let gx = slot(grads, *input, nodes);
                    for ((g, &yv), &gv) in gx.iter_mut().zip(y).zip(gy) {
                        if yv > 0.0 {
                            *g += gv;
                        }
                    }
                }
            }
            Op::MaxPool { input, argmax } => {
                if want(*input) {
                    let gx = slot(grads, *input, nodes);
                    for (&pos, &gv) in argmax.iter().zip(gy) {
                        gx[pos] += gv;
                    }
                }
            }
            Op::Gram(input) => {
                if want(*input) {
                    let x = &nodes[input.0].value;
                    let (p, m) = x.shape();
                    let gx = slot(grads, *input, nodes);
                    for i in 0..p {
                        let gi = &mut gx[i * m..(i + 1) * m];
                        for j in 0..p {
                            let coef = gy[i * p + j] + gy[j * p + i];
                            if coef != 0.0 {
                                axpy(gi, coef, x.channel(j));
                            }
                        }
                    }
                }
            }
            Op::MseSum(a, b) => {
                let g = gy[0];
                let (va, vb) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                if want(*a) {
                    let ga = slot(grads, *a, nodes);
                    for ((o, x), y) in ga.iter_mut().zip(va).zip(vb) {
                        *o += 2.0 * (x - y) * g;
                    }
                }
                if want(*b) {
                    let gb = slot(grads, *b, nodes);
                    for ((o, x), y) in gb.iter_mut().zip(va).zip(vb) {
                        *o -= 2.0 * (x - y) * g;
                    }
                }
            }
            Op::SumSquares(input) => {
                if want(*input) {
                    let x = nodes[input.0].value.data();
                    let gx = slot(grads, *input, nodes);
                    axpy(gx, 2.0 * gy[0], x);
                }
            }
            Op::Add(a, b) => {
                if want(*a) {
                    axpy(slot(grads, *a, nodes), 1.0, gy);
                }
                if want(*b) {
                    axpy(slot(grads, *b, nodes), 1.0, gy);
                }
            }
            Op::Sub(a, b) => {
                if want(*a) {
                    axpy(slot(grads, *a, nodes), 1.0, gy);
                }
                if want(*b) {
                    axpy(slot(grads, *b, nodes), -1.0, gy);
                }
            }
            Op::Scale(input, factor) => {
                if want(*input) {
                    axpy(slot(grads, *input, nodes), *factor, gy);
                }
            }
            Op::GlobalAvgPool(input) => {
                if want(*input) {
                    let len = nodes[input.0].value.length();
                    let inv = 1.0 / len as f64;
                    let gx = slot(grads, *input, nodes);
                    for (c, &g) in gy.iter().enumerate() {
                        for v in &mut gx[c * len..(c + 1) * len] {
                            *v += g * inv;
                        }
                    }
                }
            }
            Op::Dense {
                input,
                weight,
                bias,
            } => {
                let x = nodes[input.0].value.data();
                let w = &nodes[weight.0].value;
                if want(*bias) {
                    axpy(slot(grads, *bias, nodes), 1.0, gy);
                }
                if want(*weight) {
                    let gw = slot(grads, *weight, nodes);
                    let n_in = x.len();
                    for (o, &g) in gy.iter().enumerate() {
                        axpy(&mut gw[o * n_in..(o + 1) * n_in], g, x);
                    }
                }
                if want(*input) {
                    let gx = slot(grads, *input, nodes);
                    for (o, &g) in gy.iter().enumerate() {
                        axpy(gx, g, w.channel(o));
                    }
                }
            }
            Op::SoftmaxCrossEntropy {
                logits,
                label,
                probs,
            } => {
                if want(*logits) {
                    let gz = slot(grads, *logits, nodes);
                    for (k, (o, &p)) in gz.iter_mut().zip(probs).enumerate() {
                        let target = if k == *label { 1.0 } else { 0.0 };
                        *o += (p - target) * gy[0];
                    }
                }
            }
            Op::Upsample { input, factor } => {
                if want(*input) {
                    let gx = slot(grads, *input, nodes);
                    for (i, g) in gx.iter_mut().enumerate() {
                        *g += gy[i * factor..(i + 1) * factor].iter().sum::<f64>();
                    }
                }
            }
            Op::Crop { input, start } => {
                if want(*input) {
                    let in_len = nodes[input.0].value.length();
                    let len = node.value.length();
                    let gx = slot(grads, *input, nodes);
                    for c in 0..node.value.channels() {
                        axpy(
                            &mut gx[c * in_len + start..c * in_len + start + len],
                            1.0,
                            &gy[c * len..(c + 1) * len],
                        );
                    }
                }
            }
            Op::Concat(inputs) => {
                let total = node.value.length();
                let mut offset = 0;
                for &v in inputs {
                    let len = nodes[v.0].value.length();
                    if want(v) {
                        let gx = slot(grads, v, nodes);
                        for c in 0..node.value.channels() {
                            axpy(
                                &mut gx[c * len..(c + 1) * len],
                                1.0,
                                &gy[c * total + offset..c * total + offset + len],
                            );
                        }
                    }
                    offset += len;
                }
            }
            Op::ChannelNorm {
                input,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let (c, len) = node.value.shape();
                let gam = nodes[gamma.0].value.data();
                let mut sum_g = vec![0.0; c];
                let mut sum_gh = vec![0.0; c];
                for ch in 0..c {
                    let r = ch * len..(ch + 1) * len;
                    sum_g[ch] = gy[r.clone()].iter().sum();
                    sum_gh[ch] = dot(&gy[r.clone()], &normalized[r]);
                }
                if want(*beta) {
                    axpy(slot(grads, *beta, nodes), 1.0, &sum_g);
                }
                if want(*gamma) {
                    axpy(slot(grads, *gamma, nodes), 1.0, &sum_gh);
                }
                if want(*input) {
                    let gx = slot(grads, *input, nodes);
                    let n = len as f64;
                    for ch in 0..c {
                        let k = gam[ch] * inv_std[ch] / n;
                        for t in 0..len {
                            let i = ch * len + t;
                            gx[i] += k * (n * gy[i] - sum_g[ch] - normalized[i] * sum_gh[ch]);
                        }
                    }
                }
            }
        }
    }
}

fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], v: Var, nodes: &[Node]) -> &'a mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.len()])
}

pub(crate) fn gram_matrix(x: &Tensor1D) -> Tensor1D {
    let p = x.channels();
    let mut data = vec![0.0; p * p];
    for i in 0..p {
        for j in i..p {
            let v = dot(x.channel(i), x.channel(j));
            data[i * p + j] = v;
            data[j * p + i] = v;
        }
    }
    Tensor1D::new(p, p, data).expect("gram shape")
}

pub(crate) fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
