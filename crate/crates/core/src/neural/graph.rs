//! Reverse-mode differentiation over an explicitly recorded graph.
//!
//! Every operation appends a node holding its forward value and the handles
//! of its inputs. [`Graph::backward`] walks the nodes in reverse insertion
//! order, which is a valid topological order because inputs always precede
//! the nodes that consume them.

use alloc::vec;
use alloc::vec::Vec;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Abs(Var),
    Log(Var),
    Softplus(Var),
    Sum(Var),
    Mean(Var),
    SliceCols { x: Var, start: usize },
    ConcatCols(Var, Var),
    TimeStep { x: Var, t: usize },
    BroadcastRows(Var),
    Reshape(Var),
    Conv1d { x: Var, w: Var, b: Var, stride: usize },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Per-channel statistics of one batch-norm call in training mode.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, `None` when `v` does not
    /// influence the loss or was a constant.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for (p, &aik) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bv) in row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += aik * bv;
            }
        }
    }
    out
}

// g[m,n] · bᵀ where b is [k,n] → [m,k]
fn matmul_bt(g: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            out[i * k + p] = grow.iter().zip(&b[p * n..(p + 1) * n]).map(|(x, y)| x * y).sum();
        }
    }
    out
}

// aᵀ · g where a is [m,k], g is [m,n] → [k,n]
fn matmul_at(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for (p, &aip) in a[i * k..(i + 1) * k].iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            for (o, &gv) in out[p * n..(p + 1) * n].iter_mut().zip(grow) {
                *o += aip * gv;
            }
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn elementwise(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, a.shape(), b.shape()));
    }
    Tensor::new(a.shape(), a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect())
}

fn dims2(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(Error::shape(op, &[0, 0], t.shape())),
    }
}

// (batch, channels, length) view of a 2-D or 3-D batch-norm input.
fn bn_dims(t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [b, c] => Ok((b, c, 1)),
        [b, c, l] => Ok((b, c, l)),
        _ => Err(Error::shape("batch_norm", &[0, 0, 0], t.shape())),
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives gradients.
    pub fn variable(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf treated as fixed data.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = dims2("matmul", self.value(a))?;
        let (k2, n) = dims2("matmul", self.value(b))?;
        if k != k2 {
            return Err(Error::shape("matmul", &[k, n], &[k2, n]));
        }
        let out = matmul(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul(a, b), &[a, b]))
    }

    /// `x[m, n] + bias[n]` broadcast over rows. `bias` may be `[n]` or `[1, n]`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = dims2("add_row", self.value(x))?;
        if self.value(bias).len() != n {
            return Err(Error::shape("add_row", &[n], self.value(bias).shape()));
        }
        let b = self.value(bias).data();
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(n) {
            for (o, bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::AddRow(x, bias), &[x, bias]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = elementwise("add", self.value(a), self.value(b), |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = elementwise("sub", self.value(a), self.value(b), |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = elementwise("mul", self.value(a), self.value(b), |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let v = self.value(x).map(|a| a * s);
        self.push(v, Op::Scale(x, s), &[x])
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        let v = self.value(x).map(|a| a + s);
        self.push(v, Op::AddScalar(x), &[x])
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let v = self.value(x).map(sigmoid);
        self.push(v, Op::Sigmoid(x), &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let v = self.value(x).map(libm::tanh);
        self.push(v, Op::Tanh(x), &[x])
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a.max(0.0));
        self.push(v, Op::Relu(x), &[x])
    }

    pub fn leaky_relu(&mut self, x: Var, alpha: f64) -> Var {
        let v = self.value(x).map(|a| if a > 0.0 { a } else { alpha * a });
        self.push(v, Op::LeakyRelu(x, alpha), &[x])
    }

    /// `|x|` with subgradient 0 at 0.
    pub fn abs(&mut self, x: Var) -> Var {
        let v = self.value(x).map(f64::abs);
        self.push(v, Op::Abs(x), &[x])
    }

    pub fn log(&mut self, x: Var) -> Var {
        let v = self.value(x).map(libm::log);
        self.push(v, Op::Log(x), &[x])
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|a| a.max(0.0) + libm::log1p(libm::exp(-a.abs())));
        self.push(v, Op::Softplus(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(x), &[x])
    }

    /// Columns `start..start + len` of a `[m, n]` matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = dims2("slice_cols", self.value(x))?;
        if start + len > n {
            return Err(Error::shape("slice_cols", &[m, start + len], &[m, n]));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(m * len);
        for row in src.chunks(n) {
            out.extend_from_slice(&row[start..start + len]);
        }
        Ok(self.push(Tensor::new(&[m, len], out)?, Op::SliceCols { x, start }, &[x]))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, p) = dims2("concat_cols", self.value(a))?;
        let (m2, q) = dims2("concat_cols", self.value(b))?;
        if m != m2 {
            return Err(Error::shape("concat_cols", &[m, q], &[m2, q]));
        }
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(m * (p + q));
        for i in 0..m {
            out.extend_from_slice(&da[i * p..(i + 1) * p]);
            out.extend_from_slice(&db[i * q..(i + 1) * q]);
        }
        Ok(self.push(Tensor::new(&[m, p + q], out)?, Op::ConcatCols(a, b), &[a, b]))
    }

    /// Slice `x[:, t, :]` of a `[batch, time, features]` tensor.
    pub fn time_step(&mut self, x: Var, t: usize) -> Result<Var> {
        let (b, steps, f) = match *self.value(x).shape() {
            [b, s, f] => (b, s, f),
            _ => return Err(Error::shape("time_step", &[0, 0, 0], self.value(x).shape())),
        };
        if t >= steps {
            return Err(Error::shape("time_step", &[b, t + 1, f], &[b, steps, f]));
        }
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(b * f);
        for n in 0..b {
            let at = (n * steps + t) * f;
            out.extend_from_slice(&src[at..at + f]);
        }
        Ok(self.push(Tensor::new(&[b, f], out)?, Op::TimeStep { x, t }, &[x]))
    }

    /// Repeats a `[1, n]` row `rows` times.
    pub fn broadcast_rows(&mut self, x: Var, rows: usize) -> Result<Var> {
        let (one, n) = dims2("broadcast_rows", self.value(x))?;
        if one != 1 {
            return Err(Error::shape("broadcast_rows", &[1, n], &[one, n]));
        }
        let row = self.value(x).data().to_vec();
        let mut out = Vec::with_capacity(rows * n);
        for _ in 0..rows {
            out.extend_from_slice(&row);
        }
        Ok(self.push(Tensor::new(&[rows, n], out)?, Op::BroadcastRows(x), &[x]))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(x).reshape(shape)?;
        Ok(self.push(v, Op::Reshape(x), &[x]))
    }

    /// Valid (unpadded) 1-D cross-correlation.
    ///
    /// `x: [batch, in_ch, len]`, `w: [out_ch, in_ch, kernel]`, `b: [out_ch]`;
    /// output length is `(len − kernel) / stride + 1`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let (batch, cin, len) = match *self.value(x).shape() {
            [n, c, l] => (n, c, l),
            _ => return Err(Error::shape("conv1d", &[0, 0, 0], self.value(x).shape())),
        };
        let (cout, cin_w, k) = match *self.value(w).shape() {
            [o, c, k] => (o, c, k),
            _ => return Err(Error::shape("conv1d", &[0, cin, 0], self.value(w).shape())),
        };
        if cin != cin_w {
            return Err(Error::shape("conv1d", &[cout, cin, k], &[cout, cin_w, k]));
        }
        if self.value(b).len() != cout {
            return Err(Error::shape("conv1d", &[cout], self.value(b).shape()));
        }
        if stride == 0 {
            return Err(Error::InvalidArgument("conv1d stride must be positive".into()));
        }
        if len < k {
            return Err(Error::SeriesTooShort { needed: k, got: len });
        }
        let lout = (len - k) / stride + 1;
        let (xd, wd, bd) = (self.value(x).data(), self.value(w).data(), self.value(b).data());
        let mut out = vec![0.0; batch * cout * lout];
        for n in 0..batch {
            for o in 0..cout {
                for l in 0..lout {
                    let mut acc = bd[o];
                    for c in 0..cin {
                        let xrow = &xd[(n * cin + c) * len + l * stride..][..k];
                        let wrow = &wd[(o * cin + c) * k..][..k];
                        acc += xrow.iter().zip(wrow).map(|(p, q)| p * q).sum::<f64>();
                    }
                    out[(n * cout + o) * lout + l] = acc;
                }
            }
        }
        Ok(self.push(
            Tensor::new(&[batch, cout, lout], out)?,
            Op::Conv1d { x, w, b, stride },
            &[x, w, b],
        ))
    }

    /// Batch normalization using the statistics of this batch. Channels are
    /// axis 1; statistics pool the batch and (for 3-D input) length axes.
    pub fn batch_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<(Var, BatchStats)> {
        let (b, c, l) = bn_dims(self.value(x))?;
        if b < 2 {
            return Err(Error::InvalidArgument("batch norm in training mode needs a batch of at least 2".into()));
        }
        let m = (b * l) as f64;
        let xd = self.value(x).data();
        let mut mean = vec![0.0; c];
        let mut var = vec![0.0; c];
        for n in 0..b {
            for ch in 0..c {
                for v in &xd[(n * c + ch) * l..][..l] {
                    mean[ch] += v;
                }
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        for n in 0..b {
            for ch in 0..c {
                for v in &xd[(n * c + ch) * l..][..l] {
                    var[ch] += (v - mean[ch]) * (v - mean[ch]);
                }
            }
        }
        var.iter_mut().for_each(|v| *v /= m);
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / libm::sqrt(v + eps)).collect();
        let node = self.normalize(x, gamma, beta, &mean, inv_std, true)?;
        Ok((node, BatchStats { mean, var }))
    }

    /// Batch normalization with fixed (running) statistics.
    pub fn batch_norm_fixed(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], var: &[f64], eps: f64) -> Result<Var> {
        let inv_std = var.iter().map(|v| 1.0 / libm::sqrt(v + eps)).collect();
        self.normalize(x, gamma, beta, mean, inv_std, false)
    }

    fn normalize(&mut self, x: Var, gamma: Var, beta: Var, mean: &[f64], inv_std: Vec<f64>, batch_stats: bool) -> Result<Var> {
        let (b, c, l) = bn_dims(self.value(x))?;
        for p in [gamma, beta] {
            if self.value(p).len() != c {
                return Err(Error::shape("batch_norm", &[c], self.value(p).shape()));
            }
        }
        if mean.len() != c || inv_std.len() != c {
            return Err(Error::shape("batch_norm", &[c], &[mean.len()]));
        }
        let xd = self.value(x).data();
        let (gd, bd) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; xd.len()];
        let mut out = vec![0.0; xd.len()];
        for n in 0..b {
            for ch in 0..c {
                let at = (n * c + ch) * l;
                for i in at..at + l {
                    xhat[i] = (xd[i] - mean[ch]) * inv_std[ch];
                    out[i] = gd[ch] * xhat[i] + bd[ch];
                }
            }
        }
        let shape = self.value(x).shape().to_vec();
        Ok(self.push(
            Tensor::new(&shape, out)?,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            &[x, gamma, beta],
        ))
    }

    /// Gradients of the single-element `loss` with respect to every node
    /// that depends on a variable.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward", &[1], self.value(loss).shape()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot => *slot = Some(g),
        }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape()[0], av.shape()[1]);
                let n = bv.shape()[1];
                if self.nodes[a.0].needs_grad {
                    let ga = matmul_bt(g.data(), bv.data(), m, k, n);
                    self.accumulate(grads, *a, Tensor::new(&[m, k], ga)?);
                }
                if self.nodes[b.0].needs_grad {
                    let gb = matmul_at(av.data(), g.data(), m, k, n);
                    self.accumulate(grads, *b, Tensor::new(&[k, n], gb)?);
                }
            }
            Op::AddRow(x, bias) => {
                self.accumulate(grads, *x, g.clone());
                if self.nodes[bias.0].needs_grad {
                    let bshape = self.value(*bias).shape().to_vec();
                    let n = self.value(*bias).len();
                    let mut gb = vec![0.0; n];
                    for row in g.data().chunks(n) {
                        for (o, v) in gb.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *bias, Tensor::new(&bshape, gb)?);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.nodes[a.0].needs_grad {
                    self.accumulate(grads, *a, elementwise("mul", g, bv, |p, q| p * q)?);
                }
                if self.nodes[b.0].needs_grad {
                    self.accumulate(grads, *b, elementwise("mul", g, av, |p, q| p * q)?);
                }
            }
            Op::Scale(x, s) => {
                let s = *s;
                self.accumulate(grads, *x, g.map(|v| v * s));
            }
            Op::AddScalar(x) | Op::Reshape(x) => {
                let shape = self.value(*x).shape().to_vec();
                self.accumulate(grads, *x, g.reshape(&shape)?);
            }
            Op::Sigmoid(x) => {
                self.accumulate(grads, *x, elementwise("sigmoid", g, y, |gv, s| gv * s * (1.0 - s))?);
            }
            Op::Tanh(x) => {
                self.accumulate(grads, *x, elementwise("tanh", g, y, |gv, t| gv * (1.0 - t * t))?);
            }
            Op::Relu(x) => {
                let gx = elementwise("relu", g, self.value(*x), |gv, a| if a > 0.0 { gv } else { 0.0 })?;
                self.accumulate(grads, *x, gx);
            }
            Op::LeakyRelu(x, alpha) => {
                let alpha = *alpha;
                let gx = elementwise("leaky_relu", g, self.value(*x), |gv, a| if a > 0.0 { gv } else { alpha * gv })?;
                self.accumulate(grads, *x, gx);
            }
            Op::Abs(x) => {
                let gx = elementwise("abs", g, self.value(*x), |gv, a| gv * sign(a))?;
                self.accumulate(grads, *x, gx);
            }
            Op::Log(x) => {
                let gx = elementwise("log", g, self.value(*x), |gv, a| gv / a)?;
                self.accumulate(grads, *x, gx);
            }
            Op::Softplus(x) => {
                let gx = elementwise("softplus", g, self.value(*x), |gv, a| gv * sigmoid(a))?;
                self.accumulate(grads, *x, gx);
            }
            Op::Sum(x) => {
                let gv = g.item();
                self.accumulate(grads, *x, Tensor::full(self.value(*x).shape(), gv));
            }
            Op::Mean(x) => {
                let xv = self.value(*x);
                let gv = g.item() / xv.len() as f64;
                self.accumulate(grads, *x, Tensor::full(xv.shape(), gv));
            }
            Op::SliceCols { x, start } => {
                let (m, n) = (self.value(*x).shape()[0], self.value(*x).shape()[1]);
                let len = g.shape()[1];
                let mut gx = vec![0.0; m * n];
                for i in 0..m {
                    gx[i * n + start..i * n + start + len].copy_from_slice(&g.data()[i * len..(i + 1) * len]);
                }
                self.accumulate(grads, *x, Tensor::new(&[m, n], gx)?);
            }
            Op::ConcatCols(a, b) => {
                let (m, p) = (self.value(*a).shape()[0], self.value(*a).shape()[1]);
                let q = self.value(*b).shape()[1];
                let (mut ga, mut gb) = (Vec::with_capacity(m * p), Vec::with_capacity(m * q));
                for row in g.data().chunks(p + q) {
                    ga.extend_from_slice(&row[..p]);
                    gb.extend_from_slice(&row[p..]);
                }
                self.accumulate(grads, *a, Tensor::new(&[m, p], ga)?);
                self.accumulate(grads, *b, Tensor::new(&[m, q], gb)?);
            }
            Op::TimeStep { x, t } => {
                let shape = self.value(*x).shape().to_vec();
                let (b, steps, f) = (shape[0], shape[1], shape[2]);
                let mut gx = vec![0.0; b * steps * f];
                for n in 0..b {
                    let at = (n * steps + t) * f;
                    gx[at..at + f].copy_from_slice(&g.data()[n * f..(n + 1) * f]);
                }
                self.accumulate(grads, *x, Tensor::new(&shape, gx)?);
            }
            Op::BroadcastRows(x) => {
                let n = self.value(*x).len();
                let mut gx = vec![0.0; n];
                for row in g.data().chunks(n) {
                    for (o, v) in gx.iter_mut().zip(row) {
                        *o += v;
                    }
                }
                self.accumulate(grads, *x, Tensor::new(&[1, n], gx)?);
            }
            Op::Conv1d { x, w, b, stride } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (batch, cin, len) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
                let (cout, k) = (wv.shape()[0], wv.shape()[2]);
                let lout = g.shape()[2];
                let (xd, wd, gd) = (xv.data(), wv.data(), g.data());
                let mut gx = vec![0.0; xd.len()];
                let mut gw = vec![0.0; wd.len()];
                let mut gb = vec![0.0; cout];
                for n in 0..batch {
                    for o in 0..cout {
                        for l in 0..lout {
                            let go = gd[(n * cout + o) * lout + l];
                            if go == 0.0 {
                                continue;
                            }
                            gb[o] += go;
                            for c in 0..cin {
                                let xa = (n * cin + c) * len + l * stride;
                                let wa = (o * cin + c) * k;
                                for j in 0..k {
                                    gw[wa + j] += go * xd[xa + j];
                                    gx[xa + j] += go * wd[wa + j];
                                }
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(xv.shape(), gx)?);
                self.accumulate(grads, *w, Tensor::new(wv.shape(), gw)?);
                let bshape = self.value(*b).shape().to_vec();
                self.accumulate(grads, *b, Tensor::new(&bshape, gb)?);
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let (b, c, l) = bn_dims(g)?;
                let gd = g.data();
                let gamma_v = self.value(*gamma).data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                for n in 0..b {
                    for ch in 0..c {
                        let at = (n * c + ch) * l;
                        for i in at..at + l {
                            dgamma[ch] += gd[i] * xhat[i];
                            dbeta[ch] += gd[i];
                        }
                    }
                }
                if self.nodes[x.0].needs_grad {
                    let mut gx = vec![0.0; gd.len()];
                    let m = (b * l) as f64;
                    for n in 0..b {
                        for ch in 0..c {
                            let at = (n * c + ch) * l;
                            for i in at..at + l {
                                let dxhat = gd[i] * gamma_v[ch];
                                gx[i] = if *batch_stats {
                                    // dbeta = Σ g, dgamma = Σ g·x̂ per channel.
                                    inv_std[ch] / m
                                        * (m * dxhat - gamma_v[ch] * dbeta[ch] - xhat[i] * gamma_v[ch] * dgamma[ch])
                                } else {
                                    dxhat * inv_std[ch]
                                };
                            }
                        }
                    }
                    self.accumulate(grads, *x, Tensor::new(g.shape(), gx)?);
                }
                let gshape = self.value(*gamma).shape().to_vec();
                self.accumulate(grads, *gamma, Tensor::new(&gshape, dgamma)?);
                let bshape = self.value(*beta).shape().to_vec();
                self.accumulate(grads, *beta, Tensor::new(&bshape, dbeta)?);
            }
        }
        Ok(())
    }
}
