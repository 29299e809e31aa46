//! Define-by-run reverse-mode differentiation over [`Tensor`] values.
//!
//! Every op records its inputs and whatever it needs for the backward pass.
//! Nodes are appended in evaluation order, so a reverse sweep over the node
//! list is a valid topological order.

use std::collections::HashMap;

use super::kernels::{col2im, gemm, im2col, sigmoid, softplus};
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

pub(crate) fn var_from_index(i: usize) -> Var {
    Var(i)
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    MatMul { a: Var, b: Var, trans_b: bool, m: usize, k: usize, n: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRowBias { x: Var, bias: Var },
    Scale { x: Var, c: f64 },
    AddConst { x: Var },
    MulScalarVar { x: Var, s: Var },
    AddScalarVar { x: Var, s: Var },
    Relu(Var),
    Exp(Var),
    Ln(Var),
    Softplus(Var),
    Square(Var),
    Clamp { x: Var, lo: f64, hi: f64 },
    Sum(Var),
    Mean(Var),
    Conv1d { x: Var, w: Var, b: Option<Var>, geom: ConvGeom, cols: Vec<f64> },
    LayerNormCols { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    MeanCols(Var),
    MeanRows(Var),
    L2NormalizeRows { x: Var, norms: Vec<f64> },
    ConcatRows(Vec<Var>),
    PairwiseSqDist { a: Var, b: Var },
    RowSum(Var),
    OuterAdd { u: Var, v: Var },
    Transpose(Var),
    CrossEntropyRows { logits: Var, targets: Vec<usize>, probs: Vec<f64> },
    BceWithLogits { z: Var, targets: Vec<f64> },
    GatherRows { table: Var, ids: Vec<usize> },
    Reshape(Var),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ConvGeom {
    c_in: usize,
    c_out: usize,
    t: usize,
    k: usize,
    stride: usize,
    padding: usize,
    t_out: usize,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients of one backward sweep, indexed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `v`, or `None` when `v` does not reach the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

/// A recording of one forward evaluation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
}

fn dims2(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    t.as_matrix_dims()
        .ok_or_else(|| Error::shape(op, format!("expected rank <= 2, got {:?}", t.shape())))
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn accumulate(slot: &mut Option<Vec<f64>>, g: &[f64]) {
    match slot {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *slot = Some(g.to_vec()),
    }
}

fn accumulate_with(slot: &mut Option<Vec<f64>>, len: usize, f: impl FnOnce(&mut [f64])) {
    let acc = slot.get_or_insert_with(|| vec![0.0; len]);
    f(acc);
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

    pub fn scalar_value(&self, v: Var) -> Result<f64> {
        self.value(v).item()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; gradients are still tracked so inputs can be probed.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Parameter leaf. Repeated calls for the same id return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.param_vars.get(&id) {
            return *v;
        }
        let src = store.value(id);
        let value = Tensor::new(src.shape().to_vec(), src.data().to_vec()).expect("same shape");
        let v = self.push(value, Op::Param);
        self.param_vars.insert(id, v);
        v
    }

    pub fn param_by_name(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let id = store
            .id(name)
            .ok_or_else(|| Error::invalid(format!("unknown parameter `{name}`")))?;
        Ok(self.param(store, id))
    }

    /// `a · b` for matrices (rank-1 operands are single rows).
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (m, k) = dims2("matmul", self.value(a))?;
        let (br, bc) = dims2("matmul", self.value(b))?;
        let (kb, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != kb {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}{}", self.shape(a), self.shape(b), if trans_b { "ᵀ" } else { "" }),
            ));
        }
        let mut out = vec![0.0; m * n];
        let bs = if trans_b { (1, bc) } else { (bc, 1) };
        gemm(m, k, n, self.value(a).data(), (k, 1), self.value(b).data(), bs, 0.0, &mut out);
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push(t, Op::MatMul { a, b, trans_b, m, k, n }))
    }

    fn binary(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        same_shape(op, self.value(a), self.value(b))?;
        let data =
            self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(self.shape(a).to_vec(), data)
    }

    fn unary(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let v = self.value(x);
        Tensor::new(v.shape().to_vec(), v.data().iter().map(|x| f(*x)).collect()).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary("sub", a, b, |x, y| x - y)?;
        Ok(self.push(t, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(t, Op::Mul(a, b)))
    }

    /// Adds a length-`n` bias to every row of an `m × n` matrix.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (m, n) = dims2("add_row_bias", self.value(x))?;
        if self.value(bias).len() != n {
            return Err(Error::shape(
                "add_row_bias",
                format!("{:?} + bias {:?}", self.shape(x), self.shape(bias)),
            ));
        }
        let bv = self.value(bias).data();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(n.max(1)).take(m) {
            row.iter_mut().zip(bv).for_each(|(a, b)| *a += b);
        }
        let t = Tensor::new(self.shape(x).to_vec(), data)?;
        Ok(self.push(t, Op::AddRowBias { x, bias }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.unary(x, |v| v * c);
        self.push(t, Op::Scale { x, c })
    }

    pub fn add_const(&mut self, x: Var, c: f64) -> Var {
        let t = self.unary(x, |v| v + c);
        self.push(t, Op::AddConst { x })
    }

    /// Multiplies every element of `x` by the one-element node `s`.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = self.value(s).item().map_err(|_| Error::shape("mul_scalar", "scale must have one value"))?;
        let t = self.unary(x, |v| v * sv);
        Ok(self.push(t, Op::MulScalarVar { x, s }))
    }

    /// Adds the one-element node `s` to every element of `x`.
    pub fn add_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = self.value(s).item().map_err(|_| Error::shape("add_scalar", "offset must have one value"))?;
        let t = self.unary(x, |v| v + sv);
        Ok(self.push(t, Op::AddScalarVar { x, s }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.unary(x, |v| v.max(0.0));
        self.push(t, Op::Relu(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let t = self.unary(x, f64::exp);
        self.push(t, Op::Exp(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let t = self.unary(x, f64::ln);
        self.push(t, Op::Ln(x))
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        let t = self.unary(x, softplus);
        self.push(t, Op::Softplus(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let t = self.unary(x, |v| v * v);
        self.push(t, Op::Square(x))
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let t = self.unary(x, |v| v.clamp(lo, hi));
        self.push(t, Op::Clamp { x, lo, hi })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.is_empty() {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let s = v.data().iter().sum::<f64>() / v.len() as f64;
        Ok(self.push(Tensor::scalar(s), Op::Mean(x)))
    }

    /// 1-D convolution of a `c_in × t` signal with `c_out × c_in × k` kernels.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: usize) -> Result<Var> {
        let (c_in, t) = match self.shape(x) {
            [c, t] => (*c, *t),
            s => return Err(Error::shape("conv1d", format!("input must be C×T, got {s:?}"))),
        };
        let (c_out, wc, k) = match self.shape(w) {
            [o, i, k] => (*o, *i, *k),
            s => return Err(Error::shape("conv1d", format!("kernel must be Cout×Cin×K, got {s:?}"))),
        };
        if wc != c_in {
            return Err(Error::shape(
                "conv1d",
                format!("input {:?} vs kernel {:?}", self.shape(x), self.shape(w)),
            ));
        }
        if stride == 0 || k == 0 || k > t + 2 * padding {
            return Err(Error::shape(
                "conv1d",
                format!("invalid geometry: T={t}, K={k}, stride={stride}, padding={padding}"),
            ));
        }
        if let Some(b) = b {
            if self.value(b).len() != c_out {
                return Err(Error::shape("conv1d", format!("bias {:?} for {c_out} channels", self.shape(b))));
            }
        }
        let t_out = (t + 2 * padding - k) / stride + 1;
        let geom = ConvGeom { c_in, c_out, t, k, stride, padding, t_out };
        let cols = im2col(self.value(x).data(), c_in, t, k, stride, padding, t_out);
        let mut out = vec![0.0; c_out * t_out];
        gemm(c_out, c_in * k, t_out, self.value(w).data(), (c_in * k, 1), &cols, (t_out, 1), 0.0, &mut out);
        if let Some(b) = b {
            let bv = self.value(b).data();
            for (row, bias) in out.chunks_mut(t_out).zip(bv) {
                row.iter_mut().for_each(|v| *v += bias);
            }
        }
        let t = Tensor::new(vec![c_out, t_out], out)?;
        Ok(self.push(t, Op::Conv1d { x, w, b, geom, cols }))
    }

    /// Normalizes each column of a `C × T` matrix over its `C` entries, then
    /// applies a per-row affine map.
    pub fn layer_norm_cols(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (c, t) = match self.shape(x) {
            [c, t] => (*c, *t),
            s => return Err(Error::shape("layer_norm", format!("input must be C×T, got {s:?}"))),
        };
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(Error::shape(
                "layer_norm",
                format!("{:?} with gain {:?}, bias {:?}", self.shape(x), self.shape(gamma), self.shape(beta)),
            ));
        }
        let xv = self.value(x).data();
        let mut mean = vec![0.0; t];
        for row in xv.chunks(t) {
            mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= c as f64);
        let mut var = vec![0.0; t];
        for row in xv.chunks(t) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|s| 1.0 / (s / c as f64 + eps).sqrt()).collect();
        let mut xhat = vec![0.0; c * t];
        for (ci, row) in xv.chunks(t).enumerate() {
            let dst = &mut xhat[ci * t..(ci + 1) * t];
            for j in 0..t {
                dst[j] = (row[j] - mean[j]) * inv_std[j];
            }
        }
        let g = self.value(gamma).data();
        let bb = self.value(beta).data();
        let mut out = xhat.clone();
        for ci in 0..c {
            out[ci * t..(ci + 1) * t].iter_mut().for_each(|v| *v = *v * g[ci] + bb[ci]);
        }
        let tensor = Tensor::new(vec![c, t], out)?;
        Ok(self.push(tensor, Op::LayerNormCols { x, gamma, beta, xhat, inv_std }))
    }

    /// Global average over time: `C × T` to `1 × C`.
    pub fn mean_cols(&mut self, x: Var) -> Result<Var> {
        let (c, t) = match self.shape(x) {
            [c, t] if *t > 0 => (*c, *t),
            s => return Err(Error::shape("global_avg_pool", format!("input must be C×T, got {s:?}"))),
        };
        let data = self.value(x).data().chunks(t).map(|r| r.iter().sum::<f64>() / t as f64).collect();
        let tensor = Tensor::new(vec![1, c], data)?;
        Ok(self.push(tensor, Op::MeanCols(x)))
    }

    /// Average over rows: `L × E` to `1 × E`.
    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (l, e) = dims2("mean_rows", self.value(x))?;
        if l == 0 {
            return Err(Error::shape("mean_rows", "no rows"));
        }
        let mut acc = vec![0.0; e];
        for row in self.value(x).data().chunks(e) {
            acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
        }
        acc.iter_mut().for_each(|a| *a /= l as f64);
        let tensor = Tensor::new(vec![1, e], acc)?;
        Ok(self.push(tensor, Op::MeanRows(x)))
    }

    /// Scales every row to unit Euclidean norm. A zero row is an error.
    pub fn l2_normalize_rows(&mut self, x: Var) -> Result<Var> {
        let (m, n) = dims2("l2_normalize", self.value(x))?;
        let mut data = self.value(x).data().to_vec();
        let mut norms = Vec::with_capacity(m);
        for (i, row) in data.chunks_mut(n.max(1)).take(m).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm > 1e-12) || !norm.is_finite() {
                return Err(Error::Degenerate(format!("row {i} has norm {norm:e} before normalization")));
            }
            row.iter_mut().for_each(|v| *v /= norm);
            norms.push(norm);
        }
        let tensor = Tensor::new(self.shape(x).to_vec(), data)?;
        Ok(self.push(tensor, Op::L2NormalizeRows { x, norms }))
    }

    /// Stacks matrices (or rows) with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_rows", "no inputs"));
        }
        let (_, n) = dims2("concat_rows", self.value(parts[0]))?;
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let (r, c) = dims2("concat_rows", self.value(p))?;
            if c != n {
                return Err(Error::shape(
                    "concat_rows",
                    format!("{:?} vs {:?}", self.shape(parts[0]), self.shape(p)),
                ));
            }
            rows += r;
            data.extend_from_slice(self.value(p).data());
        }
        let tensor = Tensor::new(vec![rows, n], data)?;
        Ok(self.push(tensor, Op::ConcatRows(parts.to_vec())))
    }

    /// `out[i][j] = ‖a_i − b_j‖²`.
    pub fn pairwise_sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, d) = dims2("pairwise_sq_dist", self.value(a))?;
        let (n, db) = dims2("pairwise_sq_dist", self.value(b))?;
        if d != db {
            return Err(Error::shape("pairwise_sq_dist", format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let ai = &av[i * d..(i + 1) * d];
            for j in 0..n {
                let bj = &bv[j * d..(j + 1) * d];
                out[i * n + j] = ai.iter().zip(bj).map(|(x, y)| (x - y) * (x - y)).sum();
            }
        }
        let tensor = Tensor::new(vec![m, n], out)?;
        Ok(self.push(tensor, Op::PairwiseSqDist { a, b }))
    }

    /// Sums each row of an `m × n` matrix into a length-`m` vector.
    pub fn row_sum(&mut self, x: Var) -> Result<Var> {
        let (m, n) = dims2("row_sum", self.value(x))?;
        let data: Vec<f64> = if n == 0 {
            vec![0.0; m]
        } else {
            self.value(x).data().chunks(n).map(|r| r.iter().sum()).collect()
        };
        Ok(self.push(Tensor::vector(data), Op::RowSum(x)))
    }

    /// `out[i][j] = u_i + v_j`.
    pub fn outer_add(&mut self, u: Var, v: Var) -> Var {
        let uv = self.value(u).data();
        let vv = self.value(v).data();
        let (m, n) = (uv.len(), vv.len());
        let mut out = Vec::with_capacity(m * n);
        for a in uv {
            out.extend(vv.iter().map(|b| a + b));
        }
        let tensor = Tensor::new(vec![m, n], out).expect("outer shape");
        self.push(tensor, Op::OuterAdd { u, v })
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (m, n) = dims2("transpose", self.value(x))?;
        let xv = self.value(x).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = xv[i * n + j];
            }
        }
        let tensor = Tensor::new(vec![n, m], out)?;
        Ok(self.push(tensor, Op::Transpose(x)))
    }

    /// Mean softmax cross-entropy of each row against a target column.
    pub fn cross_entropy_rows(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (m, n) = dims2("cross_entropy", self.value(logits))?;
        if targets.len() != m || m == 0 {
            return Err(Error::shape("cross_entropy", format!("{m} rows, {} targets", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= n) {
            return Err(Error::shape("cross_entropy", format!("target {bad} out of {n} columns")));
        }
        let lv = self.value(logits).data();
        let mut probs = vec![0.0; m * n];
        let mut loss = 0.0;
        for i in 0..m {
            let row = &lv[i * n..(i + 1) * n];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
            let lse = mx + z.ln();
            loss += lse - row[targets[i]];
            for j in 0..n {
                probs[i * n + j] = (row[j] - lse).exp();
            }
        }
        let tensor = Tensor::scalar(loss / m as f64);
        Ok(self.push(tensor, Op::CrossEntropyRows { logits, targets: targets.to_vec(), probs }))
    }

    /// Mean binary cross-entropy between `sigmoid(z)` and `targets`.
    pub fn bce_with_logits(&mut self, z: Var, targets: &[f64]) -> Result<Var> {
        let zv = self.value(z).data();
        if zv.len() != targets.len() || zv.is_empty() {
            return Err(Error::shape("bce_with_logits", format!("{} logits, {} targets", zv.len(), targets.len())));
        }
        let loss: f64 = zv.iter().zip(targets).map(|(z, y)| softplus(*z) - y * z).sum::<f64>() / zv.len() as f64;
        Ok(self.push(Tensor::scalar(loss), Op::BceWithLogits { z, targets: targets.to_vec() }))
    }

    /// Selects rows of a `V × E` table.
    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, e) = dims2("gather_rows", self.value(table))?;
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::shape("gather_rows", format!("id {bad} out of {v} rows")));
        }
        let tv = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * e);
        for &i in ids {
            out.extend_from_slice(&tv[i * e..(i + 1) * e]);
        }
        let tensor = Tensor::new(vec![ids.len(), e], out)?;
        Ok(self.push(tensor, Op::GatherRows { table, ids: ids.to_vec() }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(x).clone().reshape(shape)?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    /// Reverse sweep from a scalar `loss`, returning gradients for every node.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::shape("backward", format!("loss must be scalar, got {:?}", self.shape(loss))));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backprop_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Backpropagates `loss` into the parameter gradients of `store`.
    /// Gradients of parameters that do not reach the loss are zero.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<Gradients> {
        let grads = self.gradients(loss)?;
        store.zero_grads();
        for (id, v) in &self.param_vars {
            if let Some(g) = grads.get(*v) {
                let dst = store.get_mut(*id).value.grad_mut();
                dst.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
        Ok(grads)
    }

    fn backprop_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.data();
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul { a, b, trans_b, m, k, n } => {
                let (m, k, n) = (*m, *k, *n);
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                // dA = G · B_effᵀ, where B_eff is k × n
                let beff_t = if *trans_b { (k, 1) } else { (1, n) };
                accumulate_with(&mut grads[a.0], m * k, |da| {
                    gemm(m, n, k, g, (n, 1), bv, beff_t, 1.0, da);
                });
                if *trans_b {
                    // B is n × k: dB = Gᵀ · A
                    accumulate_with(&mut grads[b.0], n * k, |db| {
                        gemm(n, m, k, g, (1, n), av, (k, 1), 1.0, db);
                    });
                } else {
                    // dB = Aᵀ · G
                    accumulate_with(&mut grads[b.0], k * n, |db| {
                        gemm(k, m, n, av, (1, k), g, (n, 1), 1.0, db);
                    });
                }
            }
            Op::Add(a, b) => {
                accumulate(&mut grads[a.0], g);
                accumulate(&mut grads[b.0], g);
            }
            Op::Sub(a, b) => {
                accumulate(&mut grads[a.0], g);
                let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                accumulate(&mut grads[b.0], &neg);
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let ga: Vec<f64> = g.iter().zip(bv).map(|(g, b)| g * b).collect();
                let gb: Vec<f64> = g.iter().zip(av).map(|(g, a)| g * a).collect();
                accumulate(&mut grads[a.0], &ga);
                accumulate(&mut grads[b.0], &gb);
            }
            Op::AddRowBias { x, bias } => {
                accumulate(&mut grads[x.0], g);
                let n = self.value(*bias).len();
                accumulate_with(&mut grads[bias.0], n, |db| {
                    for row in g.chunks(n.max(1)) {
                        db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
                    }
                });
            }
            Op::Scale { x, c } => {
                let gx: Vec<f64> = g.iter().map(|v| v * c).collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::AddConst { x } => accumulate(&mut grads[x.0], g),
            Op::MulScalarVar { x, s } => {
                let sv = self.value(*s).data()[0];
                let xv = self.value(*x).data();
                let gx: Vec<f64> = g.iter().map(|v| v * sv).collect();
                let gs: f64 = g.iter().zip(xv).map(|(g, x)| g * x).sum();
                accumulate(&mut grads[x.0], &gx);
                accumulate(&mut grads[s.0], &[gs]);
            }
            Op::AddScalarVar { x, s } => {
                accumulate(&mut grads[x.0], g);
                accumulate(&mut grads[s.0], &[g.iter().sum()]);
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                let gx: Vec<f64> = g.iter().zip(xv).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 }).collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::Exp(x) => {
                let gx: Vec<f64> = g.iter().zip(out).map(|(g, y)| g * y).collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::Ln(x) => {
                let xv = self.value(*x).data();
                let gx: Vec<f64> = g.iter().zip(xv).map(|(g, x)| g / x).collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::Softplus(x) => {
                let xv = self.value(*x).data();
                let gx: Vec<f64> = g.iter().zip(xv).map(|(g, x)| g * sigmoid(*x)).collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::Square(x) => {
                let xv = self.value(*x).data();
                let gx: Vec<f64> = g.iter().zip(xv).map(|(g, x)| 2.0 * g * x).collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::Clamp { x, lo, hi } => {
                let xv = self.value(*x).data();
                let gx: Vec<f64> =
                    g.iter().zip(xv).map(|(g, x)| if *x >= *lo && *x <= *hi { *g } else { 0.0 }).collect();
                accumulate(&mut grads[x.0], &gx);
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                accumulate_with(&mut grads[x.0], n, |d| d.iter_mut().for_each(|v| *v += g[0]));
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                let s = g[0] / n as f64;
                accumulate_with(&mut grads[x.0], n, |d| d.iter_mut().for_each(|v| *v += s));
            }
            Op::Conv1d { x, w, b, geom, cols } => {
                let ConvGeom { c_in, c_out, t, k, stride, padding, t_out } = *geom;
                let ck = c_in * k;
                // dW = G · colsᵀ
                accumulate_with(&mut grads[w.0], c_out * ck, |dw| {
                    gemm(c_out, t_out, ck, g, (t_out, 1), cols, (1, t_out), 1.0, dw);
                });
                if let Some(b) = b {
                    accumulate_with(&mut grads[b.0], c_out, |db| {
                        for (d, row) in db.iter_mut().zip(g.chunks(t_out)) {
                            *d += row.iter().sum::<f64>();
                        }
                    });
                }
                // dcols = Wᵀ · G
                let wv = self.value(*w).data();
                let mut dcols = vec![0.0; ck * t_out];
                gemm(ck, c_out, t_out, wv, (1, ck), g, (t_out, 1), 0.0, &mut dcols);
                accumulate_with(&mut grads[x.0], c_in * t, |dx| {
                    col2im(&dcols, c_in, t, k, stride, padding, t_out, dx);
                });
            }
            Op::LayerNormCols { x, gamma, beta, xhat, inv_std } => {
                let t = inv_std.len();
                let c = xhat.len() / t.max(1);
                let gv = self.value(*gamma).data();
                accumulate_with(&mut grads[gamma.0], c, |dg| {
                    for ci in 0..c {
                        let row = &g[ci * t..(ci + 1) * t];
                        let xr = &xhat[ci * t..(ci + 1) * t];
                        dg[ci] += row.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
                    }
                });
                accumulate_with(&mut grads[beta.0], c, |db| {
                    for ci in 0..c {
                        db[ci] += g[ci * t..(ci + 1) * t].iter().sum::<f64>();
                    }
                });
                let mut sum_d = vec![0.0; t];
                let mut sum_dx = vec![0.0; t];
                for ci in 0..c {
                    for j in 0..t {
                        let d = g[ci * t + j] * gv[ci];
                        sum_d[j] += d;
                        sum_dx[j] += d * xhat[ci * t + j];
                    }
                }
                let cf = c as f64;
                accumulate_with(&mut grads[x.0], c * t, |dx| {
                    for ci in 0..c {
                        for j in 0..t {
                            let d = g[ci * t + j] * gv[ci];
                            dx[ci * t + j] +=
                                inv_std[j] / cf * (cf * d - sum_d[j] - xhat[ci * t + j] * sum_dx[j]);
                        }
                    }
                });
            }
            Op::MeanCols(x) => {
                let (c, t) = (self.shape(*x)[0], self.shape(*x)[1]);
                accumulate_with(&mut grads[x.0], c * t, |dx| {
                    for ci in 0..c {
                        let s = g[ci] / t as f64;
                        dx[ci * t..(ci + 1) * t].iter_mut().for_each(|v| *v += s);
                    }
                });
            }
            Op::MeanRows(x) => {
                let (l, e) = dims2("mean_rows", self.value(*x)).expect("checked in forward");
                accumulate_with(&mut grads[x.0], l * e, |dx| {
                    for row in dx.chunks_mut(e.max(1)) {
                        row.iter_mut().zip(g).for_each(|(d, v)| *d += v / l as f64);
                    }
                });
            }
            Op::L2NormalizeRows { x, norms } => {
                let n = self.value(*x).len() / norms.len().max(1);
                accumulate_with(&mut grads[x.0], norms.len() * n, |dx| {
                    for (i, norm) in norms.iter().enumerate() {
                        let y = &out[i * n..(i + 1) * n];
                        let gr = &g[i * n..(i + 1) * n];
                        let dot: f64 = y.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for j in 0..n {
                            dx[i * n + j] += (gr[j] - y[j] * dot) / norm;
                        }
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    accumulate(&mut grads[p.0], &g[off..off + len]);
                    off += len;
                }
            }
            Op::PairwiseSqDist { a, b } => {
                let (m, d) = dims2("pairwise_sq_dist", self.value(*a)).expect("checked");
                let n = self.value(*b).len() / d.max(1);
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let mut da = vec![0.0; m * d];
                let mut db = vec![0.0; n * d];
                for i in 0..m {
                    for j in 0..n {
                        let gij = 2.0 * g[i * n + j];
                        if gij == 0.0 {
                            continue;
                        }
                        for q in 0..d {
                            let diff = gij * (av[i * d + q] - bv[j * d + q]);
                            da[i * d + q] += diff;
                            db[j * d + q] -= diff;
                        }
                    }
                }
                accumulate(&mut grads[a.0], &da);
                accumulate(&mut grads[b.0], &db);
            }
            Op::RowSum(x) => {
                let total = self.value(*x).len();
                let m = g.len();
                let n = if m == 0 { 0 } else { total / m };
                accumulate_with(&mut grads[x.0], total, |dx| {
                    for i in 0..m {
                        dx[i * n..(i + 1) * n].iter_mut().for_each(|v| *v += g[i]);
                    }
                });
            }
            Op::OuterAdd { u, v } => {
                let m = self.value(*u).len();
                let n = self.value(*v).len();
                accumulate_with(&mut grads[u.0], m, |du| {
                    for i in 0..m {
                        du[i] += g[i * n..(i + 1) * n].iter().sum::<f64>();
                    }
                });
                accumulate_with(&mut grads[v.0], n, |dv| {
                    for i in 0..m {
                        dv.iter_mut().zip(&g[i * n..(i + 1) * n]).for_each(|(d, x)| *d += x);
                    }
                });
            }
            Op::Transpose(x) => {
                let (m, n) = dims2("transpose", self.value(*x)).expect("checked");
                accumulate_with(&mut grads[x.0], m * n, |dx| {
                    for i in 0..m {
                        for j in 0..n {
                            dx[i * n + j] += g[j * m + i];
                        }
                    }
                });
            }
            Op::CrossEntropyRows { logits, targets, probs } => {
                let m = targets.len();
                let n = probs.len() / m;
                let s = g[0] / m as f64;
                accumulate_with(&mut grads[logits.0], m * n, |dl| {
                    for i in 0..m {
                        for j in 0..n {
                            let onehot = if j == targets[i] { 1.0 } else { 0.0 };
                            dl[i * n + j] += s * (probs[i * n + j] - onehot);
                        }
                    }
                });
            }
            Op::BceWithLogits { z, targets } => {
                let zv = self.value(*z).data();
                let s = g[0] / zv.len() as f64;
                let gz: Vec<f64> = zv.iter().zip(targets).map(|(z, y)| s * (sigmoid(*z) - y)).collect();
                accumulate(&mut grads[z.0], &gz);
            }
            Op::GatherRows { table, ids } => {
                let (v, e) = dims2("gather_rows", self.value(*table)).expect("checked");
                accumulate_with(&mut grads[table.0], v * e, |dt| {
                    for (r, &id) in ids.iter().enumerate() {
                        dt[id * e..(id + 1) * e].iter_mut().zip(&g[r * e..(r + 1) * e]).for_each(|(d, x)| *d += x);
                    }
                });
            }
            Op::Reshape(x) => accumulate(&mut grads[x.0], g),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn linear_gradient() {
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::scalar(3.0)).unwrap();
        let mut tape = Tape::new();
        let x = tape.input(Tensor::scalar(2.0));
        let wv = tape.param(&store, w);
        let y = tape.mul(wv, x).unwrap();
        tape.backward(y, &mut store).unwrap();
        assert_eq!(store.grad(w), &[2.0]);
    }

    #[test]
    fn constant_loss_gives_zero_gradients() {
        let mut store = ParamStore::new();
        let w = store.insert("w", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let mut tape = Tape::new();
        let _unused = tape.param(&store, w);
        let c = tape.input(Tensor::scalar(5.0));
        tape.backward(c, &mut store).unwrap();
        assert_eq!(store.grad(w), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut store = ParamStore::new();
        let mut tape = Tape::new();
        let x = tape.input(Tensor::vector(vec![1.0, 2.0]));
        assert!(tape.backward(x, &mut store).is_err());
    }

    #[test]
    fn matmul_shape_error_names_op() {
        let mut tape = Tape::new();
        let a = tape.input(t(&[2, 3], &[0.0; 6]));
        let b = tape.input(t(&[2, 3], &[0.0; 6]));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("matmul"), "{err}");
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn conv_identity_kernel() {
        let mut tape = Tape::new();
        let x = tape.input(t(&[1, 5], &[1.0, -2.0, 3.0, 0.5, 4.0]));
        let w = tape.input(t(&[1, 1, 1], &[1.0]));
        let y = tape.conv1d(x, w, None, 1, 0).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn conv_zero_input_gives_bias() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::zeros(&[2, 9]));
        let w = tape.input(Tensor::filled(&[3, 2, 3], 0.7));
        let b = tape.input(Tensor::vector(vec![0.5, -1.0, 2.0]));
        let y = tape.conv1d(x, w, Some(b), 2, 1).unwrap();
        assert_eq!(tape.shape(y), &[3, 5]);
        for (c, row) in tape.value(y).data().chunks(5).enumerate() {
            assert!(row.iter().all(|v| *v == [0.5, -1.0, 2.0][c]));
        }
    }

    #[test]
    fn conv_rejects_bad_geometry() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::zeros(&[1, 3]));
        let w = tape.input(Tensor::zeros(&[1, 1, 5]));
        assert!(tape.conv1d(x, w, None, 1, 0).is_err());
        assert!(tape.conv1d(x, w, None, 1, 1).is_ok());
        assert!(tape.conv1d(x, w, None, 0, 1).is_err());
    }

    #[test]
    fn l2_normalize_zero_row_is_error() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::zeros(&[1, 4]));
        assert!(matches!(tape.l2_normalize_rows(x), Err(Error::Degenerate(_))));
    }

    #[test]
    fn cross_entropy_uniform_logits_is_ln_n() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::zeros(&[3, 5]));
        let l = tape.cross_entropy_rows(x, &[0, 1, 4]).unwrap();
        assert!((tape.scalar_value(l).unwrap() - 5f64.ln()).abs() < 1e-14);
    }
}
