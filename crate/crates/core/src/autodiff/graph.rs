use std::collections::BTreeMap;

use super::Tensor;
use crate::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRowBias(Var, Var),
    Gelu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Conv1d {
        x: Var,
        kernel: Var,
        bias: Var,
        stride: usize,
    },
    Softmax(Var),
    Reshape(Var),
    Rows {
        x: Var,
        start: usize,
    },
    Cols {
        x: Var,
        start: usize,
    },
    StackRows(Vec<Var>),
    ConcatCols(Var, Var),
    CrossEntropy {
        logits: Var,
        label: usize,
    },
    Mse(Var, Var),
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A define-by-run computation record.
///
/// Confined to one thread; independent graphs may be built concurrently.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(String, Var)>,
}

fn finite(t: Tensor, op: &'static str) -> Result<Tensor> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite(op))
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, name: &'static str) -> Result<Var> {
        let value = finite(value, name)?;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Constant input; never receives a gradient.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, false, "constant")
    }

    /// Differentiable leaf that is not a named parameter.
    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, true, "leaf")
    }

    /// Named learnable parameter.
    pub fn param(&mut self, name: &str, t: &Tensor) -> Result<Var> {
        let v = self.push(t.clone(), Op::Leaf, true, "param")?;
        self.params.push((name.to_string(), v));
        Ok(v)
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.iter().map(|(n, _)| n.as_str())
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::ShapeMismatch {
                op,
                lhs: sa.to_vec(),
                rhs: sb.to_vec(),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; m * n];
        matmul_into(ta.data(), tb.data(), &mut out, m, k, n);
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), rg, "matmul")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        self.push(t, Op::Add(a, b), rg, "add")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .collect();
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        self.push(t, Op::Mul(a, b), rg, "mul")
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let tx = self.value(x);
        let t = Tensor::new(tx.shape().to_vec(), tx.data().iter().map(|v| v * c).collect())?;
        let rg = self.rg(x);
        self.push(t, Op::Scale(x, c), rg, "scale")
    }

    /// `x[r, :] + b` for every row of a 2-D `x`.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        if tx.shape().len() != 2 || tb.numel() != tx.shape()[1] {
            return Err(Error::ShapeMismatch {
                op: "add_row_bias",
                lhs: tx.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let c = tb.numel();
        let data = tx
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + tb.data()[i % c])
            .collect();
        let t = Tensor::new(tx.shape().to_vec(), data)?;
        let rg = self.rg(x) || self.rg(b);
        self.push(t, Op::AddRowBias(x, b), rg, "add_row_bias")
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op, name: &'static str) -> Result<Var> {
        let tx = self.value(x);
        let t = Tensor::new(tx.shape().to_vec(), tx.data().iter().map(|&v| f(v)).collect())?;
        let rg = self.rg(x);
        self.push(t, op, rg, name)
    }

    /// tanh-approximated GELU.
    pub fn gelu(&mut self, x: Var) -> Result<Var> {
        self.unary(
            x,
            |v| 0.5 * v * (1.0 + (GELU_C * (v + GELU_A * v * v * v)).tanh()),
            Op::Gelu(x),
            "gelu",
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, sigmoid, Op::Sigmoid(x), "sigmoid")
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, f64::tanh, Op::Tanh(x), "tanh")
    }

    /// 1-D convolution over time with zero "same" padding.
    ///
    /// `x` is `T x C_in`, `kernel` is `K x C_in x C_out` with odd `K`, `bias`
    /// has `C_out` entries. The output has `ceil(T / stride)` frames; frame
    /// `t` is centered on input frame `t * stride`.
    pub fn conv1d(&mut self, x: Var, kernel: Var, bias: Var, stride: usize) -> Result<Var> {
        let (tx, tk, tb) = (self.value(x), self.value(kernel), self.value(bias));
        let ks = tk.shape();
        if ks.len() != 3 || ks[0] % 2 == 0 {
            return Err(Error::Config(format!(
                "conv1d kernel must be K x C_in x C_out with odd K (got {ks:?})"
            )));
        }
        let (k, cin, cout) = (ks[0], ks[1], ks[2]);
        if tx.shape().len() != 2 || tx.shape()[1] != cin || tb.numel() != cout {
            return Err(Error::ShapeMismatch {
                op: "conv1d",
                lhs: tx.shape().to_vec(),
                rhs: ks.to_vec(),
            });
        }
        if stride == 0 {
            return Err(Error::Config("conv1d stride must be positive".into()));
        }
        let t_in = tx.shape()[0];
        let t_out = t_in.div_ceil(stride);
        let pad = (k - 1) / 2;
        let (xd, kd) = (tx.data(), tk.data());
        let mut out = vec![0.0; t_out * cout];
        for t in 0..t_out {
            let o = &mut out[t * cout..(t + 1) * cout];
            o.copy_from_slice(tb.data());
            for j in 0..k {
                let src = (t * stride + j) as isize - pad as isize;
                if src < 0 || src as usize >= t_in {
                    continue;
                }
                let xr = &xd[src as usize * cin..(src as usize + 1) * cin];
                for (ci, &xv) in xr.iter().enumerate() {
                    if xv == 0.0 {
                        continue;
                    }
                    let w = &kd[(j * cin + ci) * cout..(j * cin + ci + 1) * cout];
                    for (ov, wv) in o.iter_mut().zip(w) {
                        *ov += xv * wv;
                    }
                }
            }
        }
        let rg = self.rg(x) || self.rg(kernel) || self.rg(bias);
        self.push(
            Tensor::new(vec![t_out, cout], out)?,
            Op::Conv1d {
                x,
                kernel,
                bias,
                stride,
            },
            rg,
            "conv1d",
        )
    }

    /// Shift-stabilized softmax over all elements of `x` (keeps `x`'s shape).
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.numel() == 0 {
            return Err(Error::Config("softmax over an empty sequence".into()));
        }
        let max = tx.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = tx.data().iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let t = Tensor::new(tx.shape().to_vec(), exps.iter().map(|e| e / z).collect())?;
        let rg = self.rg(x);
        self.push(t, Op::Softmax(x), rg, "softmax")
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape.to_vec())?;
        let rg = self.rg(x);
        self.push(t, Op::Reshape(x), rg, "reshape")
    }

    /// Rows `start..start + len` of a 2-D tensor.
    pub fn rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        if tx.shape().len() != 2 || start + len > tx.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "rows",
                lhs: tx.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let c = tx.shape()[1];
        let t = Tensor::new(vec![len, c], tx.data()[start * c..(start + len) * c].to_vec())?;
        let rg = self.rg(x);
        self.push(t, Op::Rows { x, start }, rg, "rows")
    }

    /// Columns `start..start + len` of a 2-D tensor.
    pub fn cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        if tx.shape().len() != 2 || start + len > tx.shape()[1] {
            return Err(Error::ShapeMismatch {
                op: "cols",
                lhs: tx.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let (r, c) = (tx.shape()[0], tx.shape()[1]);
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&tx.data()[i * c + start..i * c + start + len]);
        }
        let t = Tensor::new(vec![r, len], data)?;
        let rg = self.rg(x);
        self.push(t, Op::Cols { x, start }, rg, "cols")
    }

    /// Concatenates 2-D tensors with equal column counts along rows.
    pub fn stack_rows(&mut self, xs: &[Var]) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return Err(Error::Config("stack_rows of nothing".into()));
        };
        let c = self.value(first).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &v in xs {
            let tv = self.value(v);
            if tv.shape().len() != 2 || tv.shape()[1] != c {
                return Err(Error::ShapeMismatch {
                    op: "stack_rows",
                    lhs: self.value(first).shape().to_vec(),
                    rhs: tv.shape().to_vec(),
                });
            }
            rows += tv.shape()[0];
            data.extend_from_slice(tv.data());
        }
        let rg = xs.iter().any(|&v| self.rg(v));
        self.push(Tensor::new(vec![rows, c], data)?, Op::StackRows(xs.to_vec()), rg, "stack_rows")
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[0] != tb.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "concat_cols",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (r, ca, cb) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut data = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            data.extend_from_slice(ta.row(i));
            data.extend_from_slice(tb.row(i));
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(vec![r, ca + cb], data)?, Op::ConcatCols(a, b), rg, "concat_cols")
    }

    /// `-log softmax(logits)[label]`, log-sum-exp stabilized. Scalar output.
    pub fn cross_entropy(&mut self, logits: Var, label: usize) -> Result<Var> {
        let tl = self.value(logits);
        let k = tl.numel();
        if label >= k {
            return Err(Error::LabelOutOfRange { label, classes: k });
        }
        let max = tl.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + tl.data().iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - tl.data()[label];
        let rg = self.rg(logits);
        self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, label }, rg, "cross_entropy")
    }

    /// Mean squared difference. Gradient reaches `b` only if `b` itself
    /// requires one; pass teacher targets as constants.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mse", a, b)?;
        let (ta, tb) = (self.value(a), self.value(b));
        let n = ta.numel().max(1) as f64;
        let s: f64 = ta.data().iter().zip(tb.data()).map(|(x, y)| (x - y) * (x - y)).sum();
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::scalar(s / n), Op::Mse(a, b), rg, "mse")
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg, "sum")
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).numel() != 1 {
            return Err(Error::ShapeMismatch {
                op: "backward",
                lhs: self.value(loss).shape().to_vec(),
                rhs: vec![],
            });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if self.rg(loss) {
            grads[loss.0] = Some(vec![1.0]);
        }
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            params: self.params.clone(),
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn backprop_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let out = node.value.data();
        let mut acc = |v: Var, f: &dyn Fn(&mut [f64])| {
            if !self.rg(v) {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                // dA = dC * B^T
                acc(*a, &|ga| {
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let br = &tb.data()[p * n..(p + 1) * n];
                            ga[i * k + p] += gr.iter().zip(br).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                });
                // dB = A^T * dC
                acc(*b, &|gb| {
                    for i in 0..m {
                        let gr = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = ta.data()[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for (o, x) in gb[p * n..(p + 1) * n].iter_mut().zip(gr) {
                                *o += av * x;
                            }
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &|ga| ga.iter_mut().zip(g).for_each(|(o, x)| *o += x));
                acc(*b, &|gb| gb.iter_mut().zip(g).for_each(|(o, x)| *o += x));
            }
            Op::Mul(a, b) => {
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &|ga| {
                    for i in 0..g.len() {
                        ga[i] += g[i] * db[i];
                    }
                });
                acc(*b, &|gb| {
                    for i in 0..g.len() {
                        gb[i] += g[i] * da[i];
                    }
                });
            }
            Op::Scale(x, c) => acc(*x, &|gx| gx.iter_mut().zip(g).for_each(|(o, v)| *o += c * v)),
            Op::AddRowBias(x, b) => {
                acc(*x, &|gx| gx.iter_mut().zip(g).for_each(|(o, v)| *o += v));
                let c = self.value(*b).numel();
                acc(*b, &|gb| {
                    for (i, v) in g.iter().enumerate() {
                        gb[i % c] += v;
                    }
                });
            }
            Op::Gelu(x) => {
                let xd = self.value(*x).data();
                acc(*x, &|gx| {
                    for i in 0..g.len() {
                        let v = xd[i];
                        let u = GELU_C * (v + GELU_A * v * v * v);
                        let th = u.tanh();
                        let du = GELU_C * (1.0 + 3.0 * GELU_A * v * v);
                        let d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
                        gx[i] += g[i] * d;
                    }
                });
            }
            Op::Sigmoid(x) => acc(*x, &|gx| {
                for i in 0..g.len() {
                    gx[i] += g[i] * out[i] * (1.0 - out[i]);
                }
            }),
            Op::Tanh(x) => acc(*x, &|gx| {
                for i in 0..g.len() {
                    gx[i] += g[i] * (1.0 - out[i] * out[i]);
                }
            }),
            Op::Conv1d {
                x,
                kernel,
                bias,
                stride,
            } => {
                let (tx, tk) = (self.value(*x), self.value(*kernel));
                let (k, cin, cout) = (tk.shape()[0], tk.shape()[1], tk.shape()[2]);
                let t_in = tx.shape()[0];
                let t_out = node.value.shape()[0];
                let pad = (k - 1) / 2;
                let src_of = |t: usize, j: usize| -> Option<usize> {
                    let s = (t * stride + j) as isize - pad as isize;
                    (s >= 0 && (s as usize) < t_in).then_some(s as usize)
                };
                acc(*x, &|gx| {
                    for t in 0..t_out {
                        let gr = &g[t * cout..(t + 1) * cout];
                        for j in 0..k {
                            let Some(s) = src_of(t, j) else { continue };
                            for ci in 0..cin {
                                let w = &tk.data()[(j * cin + ci) * cout..(j * cin + ci + 1) * cout];
                                gx[s * cin + ci] += w.iter().zip(gr).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                });
                acc(*kernel, &|gk| {
                    for t in 0..t_out {
                        let gr = &g[t * cout..(t + 1) * cout];
                        for j in 0..k {
                            let Some(s) = src_of(t, j) else { continue };
                            for ci in 0..cin {
                                let xv = tx.data()[s * cin + ci];
                                if xv == 0.0 {
                                    continue;
                                }
                                let w = &mut gk[(j * cin + ci) * cout..(j * cin + ci + 1) * cout];
                                for (o, gv) in w.iter_mut().zip(gr) {
                                    *o += xv * gv;
                                }
                            }
                        }
                    }
                });
                acc(*bias, &|gb| {
                    for t in 0..t_out {
                        for (o, v) in gb.iter_mut().zip(&g[t * cout..(t + 1) * cout]) {
                            *o += v;
                        }
                    }
                });
            }
            Op::Softmax(x) => {
                let dot: f64 = g.iter().zip(out).map(|(a, b)| a * b).sum();
                acc(*x, &|gx| {
                    for i in 0..g.len() {
                        gx[i] += out[i] * (g[i] - dot);
                    }
                });
            }
            Op::Reshape(x) => acc(*x, &|gx| gx.iter_mut().zip(g).for_each(|(o, v)| *o += v)),
            Op::Rows { x, start } => {
                let c = node.value.cols();
                acc(*x, &|gx| {
                    for (o, v) in gx[start * c..start * c + g.len()].iter_mut().zip(g) {
                        *o += v;
                    }
                });
            }
            Op::Cols { x, start } => {
                let (r, len) = (node.value.shape()[0], node.value.shape()[1]);
                let c = self.value(*x).shape()[1];
                acc(*x, &|gx| {
                    for i in 0..r {
                        for j in 0..len {
                            gx[i * c + start + j] += g[i * len + j];
                        }
                    }
                });
            }
            Op::StackRows(xs) => {
                let mut offset = 0;
                for v in xs {
                    let n = self.value(*v).numel();
                    let part = &g[offset..offset + n];
                    acc(*v, &|gv| gv.iter_mut().zip(part).for_each(|(o, x)| *o += x));
                    offset += n;
                }
            }
            Op::ConcatCols(a, b) => {
                let (ca, cb) = (self.value(*a).cols(), self.value(*b).cols());
                let r = node.value.shape()[0];
                acc(*a, &|ga| {
                    for i in 0..r {
                        for j in 0..ca {
                            ga[i * ca + j] += g[i * (ca + cb) + j];
                        }
                    }
                });
                acc(*b, &|gb| {
                    for i in 0..r {
                        for j in 0..cb {
                            gb[i * cb + j] += g[i * (ca + cb) + ca + j];
                        }
                    }
                });
            }
            Op::CrossEntropy { logits, label } => {
                let l = self.value(*logits).data();
                let max = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = l.iter().map(|v| (v - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                acc(*logits, &|gl| {
                    for i in 0..gl.len() {
                        let onehot = if i == *label { 1.0 } else { 0.0 };
                        gl[i] += g[0] * (exps[i] / z - onehot);
                    }
                });
            }
            Op::Mse(a, b) => {
                let (da, db) = (self.value(*a).data(), self.value(*b).data());
                let n = da.len().max(1) as f64;
                acc(*a, &|ga| {
                    for i in 0..da.len() {
                        ga[i] += g[0] * 2.0 * (da[i] - db[i]) / n;
                    }
                });
                acc(*b, &|gb| {
                    for i in 0..da.len() {
                        gb[i] -= g[0] * 2.0 * (da[i] - db[i]) / n;
                    }
                });
            }
            Op::Sum(x) => acc(*x, &|gx| gx.iter_mut().for_each(|o| *o += g[0])),
        }
        Ok(())
    }
}

pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let o = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            for (ov, bv) in o.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *ov += av * bv;
            }
        }
    }
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(String, Var)>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when no gradient reached it (constants,
    /// or nodes disconnected from the loss).
    pub fn get(&self, v: Var) -> Option<Tensor> {
        self.grads
            .get(v.0)?
            .as_ref()
            .map(|g| Tensor::new(self.shapes[v.0].clone(), g.clone()).expect("gradient shape"))
    }

    /// Gradients of all named parameters; parameters the loss does not
    /// depend on get zeros. Fails on any non-finite entry.
    pub fn param_grads(&self) -> Result<BTreeMap<String, Tensor>> {
        let mut out = BTreeMap::new();
        for (name, v) in &self.params {
            let t = self
                .get(*v)
                .unwrap_or_else(|| Tensor::zeros(&self.shapes[v.0]));
            if !t.is_finite() {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
            out.insert(name.clone(), t);
        }
        Ok(out)
    }
}
