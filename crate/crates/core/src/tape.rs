//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records every operation executed during a forward pass in
//! execution order. [`Tape::backward`] walks the record in reverse, so each
//! node is visited exactly once after all of its consumers. The tape is
//! meant to be rebuilt for every forward pass.

use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Sum(Var),
    Softmax { x: Var, axis: usize },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Gelu(Var),
    Relu(Var),
    Ln(Var),
    RowNormalize(Var),
    SliceRows { x: Var, start: usize },
    SliceCols { x: Var, start: usize },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Reshape(Var),
    Select { x: Var, index: usize },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Ordered record of executed operations.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Vec<f64>>>,
    first_nonfinite: Option<usize>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

/// `c = beta·c + a·b` with explicit element strides, `a` is m×k, `b` is k×n.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    c: &mut [f64],
    beta: f64,
) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c.iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    debug_assert!(c.len() >= m * n);
    // SAFETY: the caller passes slices whose extents cover the strided
    // m×k, k×n and m×n (row-major, contiguous) views.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Standard normal CDF.
pub(crate) fn phi_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

fn phi_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn axis_extents(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let len = shape[axis];
    let inner = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

fn add_into(dst: &mut Option<Vec<f64>>, src: &[f64]) {
    match dst {
        Some(d) => d.iter_mut().zip(src).for_each(|(a, b)| *a += b),
        None => *dst = Some(src.to_vec()),
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Index of the first recorded node whose value contains a NaN or an
    /// infinity, if any.
    pub fn first_nonfinite(&self) -> Option<usize> {
        self.first_nonfinite
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        let id = self.nodes.len();
        if self.first_nonfinite.is_none() && !value.is_finite() {
            self.first_nonfinite = Some(id);
        }
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        self.leaf_grads.push(None);
        Var(id)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a leaf. Gradients are tracked iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        let needs = t.requires_grad();
        let mut value = t.clone();
        value.clear_grad();
        self.push(value, Op::Leaf, needs)
    }

    /// Records a leaf that never receives gradients.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let mut value = t;
        value.set_requires_grad(false);
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = ta.dims2()?;
        let (k2, n) = tb.dims2()?;
        if k != k2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), (k, 1), tb.data(), (n, 1), &mut out, 0.0);
        let needs = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), needs))
    }

    /// `a · bᵀ` for `a` m×k and `b` n×k.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = ta.dims2()?;
        let (n, k2) = tb.dims2()?;
        if k != k2 {
            return Err(mismatch("matmul_t", ta, tb));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), (k, 1), tb.data(), (1, k), &mut out, 0.0);
        let needs = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMulT(a, b), needs))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let (r, c) = ta.dims2()?;
        let d = ta.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = d[i * c + j];
            }
        }
        let needs = self.ng(a);
        Ok(self.push(Tensor::new(vec![c, r], out)?, Op::Transpose(a), needs))
    }

    fn zip_same(&mut self, a: Var, b: Var, op_name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op_name, ta, tb));
        }
        let out: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let shape = ta.shape().to_vec();
        let needs = self.ng(a) || self.ng(b);
        Ok(self.push(Tensor::new(shape, out)?, op, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a length-n bias to every row of an m×n matrix.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(bias));
        let (m, n) = ta.dims2()?;
        if tb.numel() != n {
            return Err(mismatch("add_bias", ta, tb));
        }
        let mut out = ta.data().to_vec();
        for row in out.chunks_mut(n.max(1)).take(m) {
            row.iter_mut().zip(tb.data()).for_each(|(x, b)| *x += b);
        }
        let needs = self.ng(a) || self.ng(bias);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::AddBias(a, bias), needs))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let ta = self.value(a);
        let out = ta.data().iter().map(|x| x * c).collect();
        let shape = ta.shape().to_vec();
        let needs = self.ng(a);
        self.push(Tensor::new(shape, out).expect("same shape"), Op::Scale(a, c), needs)
    }

    /// Sum of all elements, as a 0-d tensor.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        let needs = self.ng(a);
        self.push(Tensor::scalar(s), Op::Sum(a), needs)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel().max(1);
        let s = self.sum(a);
        self.scale(s, 1.0 / n as f64)
    }

    /// Softmax along `axis`, computed with max-subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let tx = self.value(x);
        let shape = tx.shape().to_vec();
        if axis >= shape.len() {
            return Err(invalid(format!("softmax axis {axis} out of range for {shape:?}")));
        }
        let (outer, len, inner) = axis_extents(&shape, axis);
        let d = tx.data();
        let mut out = vec![0.0; d.len()];
        for o in 0..outer {
            for i in 0..inner {
                let idx = |j: usize| (o * len + j) * inner + i;
                let mx = (0..len).map(|j| d[idx(j)]).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for j in 0..len {
                    let e = (d[idx(j)] - mx).exp();
                    out[idx(j)] = e;
                    z += e;
                }
                for j in 0..len {
                    out[idx(j)] /= z;
                }
            }
        }
        let needs = self.ng(x);
        Ok(self.push(Tensor::new(shape, out)?, Op::Softmax { x, axis }, needs))
    }

    /// Layer normalization over the last axis with population variance.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let tx = self.value(x);
        let shape = tx.shape().to_vec();
        let n = *shape.last().ok_or_else(|| invalid("layer_norm on a 0-d tensor"))?;
        if n == 0 {
            return Err(invalid("layer_norm over an empty axis"));
        }
        let (tg, tb) = (self.value(gain), self.value(bias));
        if tg.numel() != n || tb.numel() != n {
            return Err(mismatch("layer_norm", tx, tg));
        }
        let (g, b) = (tg.data(), tb.data());
        let d = tx.data();
        let rows = d.len() / n;
        let mut xhat = vec![0.0; d.len()];
        let mut rstd = vec![0.0; rows];
        let mut out = vec![0.0; d.len()];
        for r in 0..rows {
            let row = &d[r * n..(r + 1) * n];
            let mu = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..n {
                let h = (row[j] - mu) * rs;
                xhat[r * n + j] = h;
                out[r * n + j] = h * g[j] + b[j];
            }
        }
        let needs = self.ng(x) || self.ng(gain) || self.ng(bias);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            needs,
        ))
    }

    /// Exact GELU, `x·Φ(x)`.
    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * phi_cdf(v), Op::Gelu(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    /// Natural logarithm.
    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, f64::ln, Op::Ln(x))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let tx = self.value(x);
        let out = tx.data().iter().map(|v| f(*v)).collect();
        let shape = tx.shape().to_vec();
        let needs = self.ng(x);
        self.push(Tensor::new(shape, out).expect("same shape"), op, needs)
    }

    /// Divides each row of a 2-D tensor by its sum.
    pub fn row_normalize(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let (r, c) = tx.dims2()?;
        let mut out = tx.data().to_vec();
        for row in out.chunks_mut(c.max(1)).take(r) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        let needs = self.ng(x);
        Ok(self.push(Tensor::new(vec![r, c], out)?, Op::RowNormalize(x), needs))
    }

    /// Rows `start..end` of a 2-D tensor.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let tx = self.value(x);
        let (r, c) = tx.dims2()?;
        if start > end || end > r {
            return Err(invalid(format!("row slice {start}..{end} of {r} rows")));
        }
        let out = tx.data()[start * c..end * c].to_vec();
        let needs = self.ng(x);
        Ok(self.push(Tensor::new(vec![end - start, c], out)?, Op::SliceRows { x, start }, needs))
    }

    /// Columns `start..end` of a 2-D tensor.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let tx = self.value(x);
        let (r, c) = tx.dims2()?;
        if start > end || end > c {
            return Err(invalid(format!("column slice {start}..{end} of {c} columns")));
        }
        let w = end - start;
        let d = tx.data();
        let mut out = Vec::with_capacity(r * w);
        for i in 0..r {
            out.extend_from_slice(&d[i * c + start..i * c + end]);
        }
        let needs = self.ng(x);
        Ok(self.push(Tensor::new(vec![r, w], out)?, Op::SliceCols { x, start }, needs))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| invalid("concat of nothing"))?;
        let (_, c) = self.value(first).dims2()?;
        let mut rows = 0;
        let mut out = Vec::new();
        for &p in parts {
            let tp = self.value(p);
            let (r, c2) = tp.dims2()?;
            if c2 != c {
                return Err(mismatch("concat_rows", self.value(first), tp));
            }
            rows += r;
            out.extend_from_slice(tp.data());
        }
        let needs = parts.iter().any(|p| self.ng(*p));
        Ok(self.push(Tensor::new(vec![rows, c], out)?, Op::ConcatRows(parts.to_vec()), needs))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or_else(|| invalid("concat of nothing"))?;
        let (r, _) = self.value(first).dims2()?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let tp = self.value(p);
            let (r2, c) = tp.dims2()?;
            if r2 != r {
                return Err(mismatch("concat_cols", self.value(first), tp));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let needs = parts.iter().any(|p| self.ng(*p));
        Ok(self.push(Tensor::new(vec![r, total], out)?, Op::ConcatCols(parts.to_vec()), needs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        let out = Tensor::new(shape.to_vec(), tx.data().to_vec())?;
        let needs = self.ng(x);
        Ok(self.push(out, Op::Reshape(x), needs))
    }

    /// The element at flat `index`, as a 0-d tensor.
    pub fn select(&mut self, x: Var, index: usize) -> Result<Var> {
        let tx = self.value(x);
        let v = *tx
            .data()
            .get(index)
            .ok_or_else(|| invalid(format!("index {index} out of range for {:?}", tx.shape())))?;
        let needs = self.ng(x);
        Ok(self.push(Tensor::scalar(v), Op::Select { x, index }, needs))
    }

    /// Accumulated gradient of the last [`Tape::backward`] calls for a leaf
    /// recorded with `requires_grad`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.leaf_grads[v.0].as_deref()
    }

    /// Clears all accumulated leaf gradients.
    pub fn zero_grad(&mut self) {
        self.leaf_grads.iter_mut().for_each(|g| *g = None);
    }

    /// Back-propagates from a single-element `loss`, accumulating
    /// `dloss/dleaf` into every gradient-tracking leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].needs_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[id].op {
                add_into(&mut self.leaf_grads[id], &g);
                continue;
            }
            self.propagate(id, &g, &mut grads)?;
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[id];
        let out = &node.value;
        let send = |v: Var, delta: Vec<f64>, grads: &mut [Option<Vec<f64>>]| {
            if self.nodes[v.0].needs_grad {
                match &mut grads[v.0] {
                    Some(d) => d.iter_mut().zip(&delta).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(delta),
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = ta.dims2()?;
                let (_, n) = tb.dims2()?;
                if self.ng(*a) {
                    // dA = dC · Bᵀ
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g, (n, 1), tb.data(), (1, n), &mut da, 0.0);
                    send(*a, da, grads);
                }
                if self.ng(*b) {
                    // dB = Aᵀ · dC
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, ta.data(), (1, k), g, (n, 1), &mut db, 0.0);
                    send(*b, db, grads);
                }
            }
            Op::MatMulT(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = ta.dims2()?;
                let (n, _) = tb.dims2()?;
                if self.ng(*a) {
                    // dA = dC · B
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g, (n, 1), tb.data(), (k, 1), &mut da, 0.0);
                    send(*a, da, grads);
                }
                if self.ng(*b) {
                    // dB = dCᵀ · A
                    let mut db = vec![0.0; n * k];
                    gemm(n, m, k, g, (1, n), ta.data(), (k, 1), &mut db, 0.0);
                    send(*b, db, grads);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = self.value(*a).dims2()?;
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        da[i * c + j] = g[j * r + i];
                    }
                }
                send(*a, da, grads);
            }
            Op::Add(a, b) => {
                send(*a, g.to_vec(), grads);
                send(*b, g.to_vec(), grads);
            }
            Op::Sub(a, b) => {
                send(*a, g.to_vec(), grads);
                send(*b, g.iter().map(|v| -v).collect(), grads);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.ng(*a) {
                    send(*a, g.iter().zip(tb.data()).map(|(x, y)| x * y).collect(), grads);
                }
                if self.ng(*b) {
                    send(*b, g.iter().zip(ta.data()).map(|(x, y)| x * y).collect(), grads);
                }
            }
            Op::AddBias(a, bias) => {
                send(*a, g.to_vec(), grads);
                if self.ng(*bias) {
                    let n = self.value(*bias).numel();
                    let mut db = vec![0.0; n];
                    for row in g.chunks(n.max(1)) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                    send(*bias, db, grads);
                }
            }
            Op::Scale(a, c) => send(*a, g.iter().map(|v| v * c).collect(), grads),
            Op::Sum(a) => {
                let n = self.value(*a).numel();
                send(*a, vec![g[0]; n], grads);
            }
            Op::Softmax { x, axis } => {
                let (outer, len, inner) = axis_extents(out.shape(), *axis);
                let y = out.data();
                let mut dx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let idx = |j: usize| (o * len + j) * inner + i;
                        let dot: f64 = (0..len).map(|j| g[idx(j)] * y[idx(j)]).sum();
                        for j in 0..len {
                            dx[idx(j)] = y[idx(j)] * (g[idx(j)] - dot);
                        }
                    }
                }
                send(*x, dx, grads);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let n = self.value(*gain).numel();
                let gv = self.value(*gain).data();
                let rows = xhat.len() / n;
                if self.ng(*x) {
                    let mut dx = vec![0.0; xhat.len()];
                    for r in 0..rows {
                        let base = r * n;
                        let mut m1 = 0.0;
                        let mut m2 = 0.0;
                        for j in 0..n {
                            let dh = g[base + j] * gv[j];
                            m1 += dh;
                            m2 += dh * xhat[base + j];
                        }
                        m1 /= n as f64;
                        m2 /= n as f64;
                        for j in 0..n {
                            let dh = g[base + j] * gv[j];
                            dx[base + j] = rstd[r] * (dh - m1 - xhat[base + j] * m2);
                        }
                    }
                    send(*x, dx, grads);
                }
                if self.ng(*gain) {
                    let mut dg = vec![0.0; n];
                    for r in 0..rows {
                        for j in 0..n {
                            dg[j] += g[r * n + j] * xhat[r * n + j];
                        }
                    }
                    send(*gain, dg, grads);
                }
                if self.ng(*bias) {
                    let mut db = vec![0.0; n];
                    for row in g.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                    send(*bias, db, grads);
                }
            }
            Op::Gelu(x) => {
                let xv = self.value(*x).data();
                let dx = g
                    .iter()
                    .zip(xv)
                    .map(|(d, &v)| d * (phi_cdf(v) + v * phi_pdf(v)))
                    .collect();
                send(*x, dx, grads);
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let dx = g
                    .iter()
                    .zip(xv)
                    .map(|(d, &v)| if v > 0.0 { *d } else { 0.0 })
                    .collect();
                send(*x, dx, grads);
            }
            Op::Ln(x) => {
                let xv = self.value(*x).data();
                send(*x, g.iter().zip(xv).map(|(d, v)| d / v).collect(), grads);
            }
            Op::RowNormalize(x) => {
                let (r, c) = out.dims2()?;
                let y = out.data();
                let xv = self.value(*x).data();
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    let row = i * c..(i + 1) * c;
                    let s: f64 = xv[row.clone()].iter().sum();
                    let dot: f64 = g[row.clone()].iter().zip(&y[row.clone()]).map(|(a, b)| a * b).sum();
                    for j in row {
                        dx[j] = (g[j] - dot) / s;
                    }
                }
                send(*x, dx, grads);
            }
            Op::SliceRows { x, start } => {
                let (r, c) = self.value(*x).dims2()?;
                let mut dx = vec![0.0; r * c];
                dx[start * c..start * c + g.len()].copy_from_slice(g);
                send(*x, dx, grads);
            }
            Op::SliceCols { x, start } => {
                let (r, c) = self.value(*x).dims2()?;
                let (_, w) = out.dims2()?;
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    dx[i * c + start..i * c + start + w].copy_from_slice(&g[i * w..(i + 1) * w]);
                }
                send(*x, dx, grads);
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let n = self.value(*p).numel();
                    send(*p, g[off..off + n].to_vec(), grads);
                    off += n;
                }
            }
            Op::ConcatCols(parts) => {
                let (r, total) = out.dims2()?;
                let mut off = 0;
                for p in parts {
                    let (_, w) = self.value(*p).dims2()?;
                    let mut dp = Vec::with_capacity(r * w);
                    for i in 0..r {
                        dp.extend_from_slice(&g[i * total + off..i * total + off + w]);
                    }
                    send(*p, dp, grads);
                    off += w;
                }
            }
            Op::Reshape(x) => send(*x, g.to_vec(), grads),
            Op::Select { x, index } => {
                let mut dx = vec![0.0; self.value(*x).numel()];
                dx[*index] = g[0];
                send(*x, dx, grads);
            }
        }
        Ok(())
    }
}
