//! Computation graph: forward operations and reverse-mode gradients.
//!
//! Nodes are appended in topological order, so `backward` is a single reverse
//! sweep. All tensors are 2-D; vectors are 1×n rows. Values are f64
//! throughout so central-difference checks can resolve 1e-4 relative error.

use super::params::{ParamId, ParamSet};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddScalar(Var, f64),
    Scale(Var, f64),
    Sigmoid(Var),
    Gelu(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    Recip(Var),
    Matmul(Var, Var),
    Transpose(Var),
    Softmax { x: Var, axis: usize },
    LogSumExp { x: Var, axis: usize },
    LayerNorm { x: Var, axis: usize, eps: f64 },
    Mean { x: Var, axis: usize },
    MeanAll(Var),
    SumAll(Var),
    L2Normalize { x: Var, axis: usize, eps: f64 },
    Concat { parts: Vec<Var>, axis: usize },
    SliceRows { x: Var, start: usize, len: usize },
    SliceCols { x: Var, start: usize, len: usize },
    RowBroadcastAdd { x: Var, row: Var },
    RowBroadcastMul { x: Var, row: Var },
    Conv1d { x: Var, w: Var, b: Var, kernel: usize, stride: usize },
    EmbedRows { table: Var, ids: Vec<usize> },
    Diag(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// A single-use computation graph over one forward pass.
pub struct Graph {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
    backward_done: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), grads: Vec::new(), backward_done: false }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad, param: None });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn requires(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn any_requires(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.requires(*v))
    }

    /// Value computed at `v`.
    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient accumulated at `v` by the last `backward`, if any flowed.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        self.grads[v.0]
            .as_ref()
            .map(|g| Tensor::new(self.nodes[v.0].value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    // ── Leaves ───────────────────────────────────────────────────────

    /// Insert a tensor as a leaf. Rank-1 tensors become 1×n rows.
    pub fn leaf(&mut self, t: Tensor, requires_grad: bool) -> Var {
        let t = if t.shape().len() == 1 { t.as_row().expect("vector leaf") } else { t };
        assert_eq!(t.shape().len(), 2, "graph tensors are 2-D");
        self.push(t, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.leaf(t, false)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    /// Bind one parameter as a gradient-tracked leaf.
    pub fn param(&mut self, set: &ParamSet, id: ParamId) -> Var {
        let v = self.leaf(set.value(id).clone(), true);
        self.nodes[v.0].param = Some(id);
        v
    }

    /// Bind every parameter of `set`, indexed by `ParamId`.
    pub fn bind_all(&mut self, set: &ParamSet) -> Vec<Var> {
        (0..set.len()).map(|i| self.param(set, ParamId::from_index(i))).collect()
    }

    // ── Elementwise ──────────────────────────────────────────────────

    fn same_shape(&self, name: &str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::dimension(name, format!("{sa:?}"), format!("{sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x + y);
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(t, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x - y);
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(t, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let data = zip_map(self.value(a).data(), self.value(b).data(), |x, y| x * y);
        let t = Tensor::new(self.value(a).shape().to_vec(), data)?;
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(t, Op::Mul(a, b), rg))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let t = self.map_unary(x, |v| v + c);
        let rg = self.requires(x);
        self.push(t, Op::AddScalar(x, c), rg)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let t = self.map_unary(x, |v| v * c);
        let rg = self.requires(x);
        self.push(t, Op::Scale(x, c), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let t = self.map_unary(x, sigmoid);
        let rg = self.requires(x);
        self.push(t, Op::Sigmoid(x), rg)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let t = self.map_unary(x, gelu);
        let rg = self.requires(x);
        self.push(t, Op::Gelu(x), rg)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let t = self.map_unary(x, f64::exp);
        let rg = self.requires(x);
        self.push(t, Op::Exp(x), rg)
    }

    pub fn log(&mut self, x: Var) -> Var {
        let t = self.map_unary(x, f64::ln);
        let rg = self.requires(x);
        self.push(t, Op::Log(x), rg)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        let t = self.map_unary(x, f64::sqrt);
        let rg = self.requires(x);
        self.push(t, Op::Sqrt(x), rg)
    }

    pub fn recip(&mut self, x: Var) -> Var {
        let t = self.map_unary(x, |v| 1.0 / v);
        let rg = self.requires(x);
        self.push(t, Op::Recip(x), rg)
    }

    fn map_unary(&self, x: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| f(v)).collect();
        Tensor::new(src.shape().to_vec(), data).expect("unary shape")
    }

    // ── Linear algebra ───────────────────────────────────────────────

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = (ta.rows(), ta.cols());
        let (k2, n) = (tb.rows(), tb.cols());
        if k != k2 {
            return Err(Error::dimension(
                "matmul",
                format!("inner dims to agree: [{m}, {k}]"),
                format!("[{k2}, {n}]"),
            ));
        }
        let data = mm(ta.data(), m, k, tb.data(), n);
        let rg = self.any_requires(&[a, b]);
        Ok(self.push(Tensor::matrix(m, n, data)?, Op::Matmul(a, b), rg))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let (r, c) = (t.rows(), t.cols());
        let data = transpose_raw(t.data(), r, c);
        let rg = self.requires(x);
        self.push(Tensor::matrix(c, r, data).expect("transpose"), Op::Transpose(x), rg)
    }

    // ── Axis reductions and normalizations ───────────────────────────

    fn check_axis(&self, name: &str, x: Var, axis: usize) -> Result<(usize, usize)> {
        let t = self.value(x);
        if axis > 1 {
            return Err(Error::dimension(name, "axis 0 or 1", axis));
        }
        let (r, c) = (t.rows(), t.cols());
        let along = if axis == 1 { c } else { r };
        if along == 0 {
            return Err(Error::dimension(name, "non-empty axis", format!("axis {axis} of {:?}", t.shape())));
        }
        Ok((r, c))
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (r, c) = self.check_axis("softmax", x, axis)?;
        let src = self.value(x).data();
        let mut out = vec![0.0; r * c];
        for_each_slice(r, c, axis, |slice| {
            let m = slice.iter().map(|&i| src[i]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for &i in slice {
                let e = (src[i] - m).exp();
                out[i] = e;
                sum += e;
            }
            for &i in slice {
                out[i] /= sum;
            }
        });
        let rg = self.requires(x);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::Softmax { x, axis }, rg))
    }

    pub fn logsumexp(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (r, c) = self.check_axis("logsumexp", x, axis)?;
        let src = self.value(x).data();
        let (or, oc) = if axis == 1 { (r, 1) } else { (1, c) };
        let mut out = vec![0.0; or * oc];
        let mut slice_idx = 0;
        for_each_slice(r, c, axis, |slice| {
            let m = slice.iter().map(|&i| src[i]).fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = slice.iter().map(|&i| (src[i] - m).exp()).sum();
            out[slice_idx] = m + sum.ln();
            slice_idx += 1;
        });
        let rg = self.requires(x);
        Ok(self.push(Tensor::matrix(or, oc, out)?, Op::LogSumExp { x, axis }, rg))
    }

    pub fn layer_norm(&mut self, x: Var, axis: usize, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::Config(format!("layer_norm eps must be positive, got {eps}")));
        }
        let (r, c) = self.check_axis("layer_norm", x, axis)?;
        let src = self.value(x).data();
        let mut out = vec![0.0; r * c];
        for_each_slice(r, c, axis, |slice| {
            let n = slice.len() as f64;
            let mu: f64 = slice.iter().map(|&i| src[i]).sum::<f64>() / n;
            let var: f64 = slice.iter().map(|&i| (src[i] - mu) * (src[i] - mu)).sum::<f64>() / n;
            let rstd = 1.0 / (var + eps).sqrt();
            for &i in slice {
                out[i] = (src[i] - mu) * rstd;
            }
        });
        let rg = self.requires(x);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::LayerNorm { x, axis, eps }, rg))
    }

    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var> {
        let (r, c) = self.check_axis("mean", x, axis)?;
        let src = self.value(x).data();
        let (or, oc) = if axis == 1 { (r, 1) } else { (1, c) };
        let mut out = vec![0.0; or * oc];
        let mut slice_idx = 0;
        for_each_slice(r, c, axis, |slice| {
            out[slice_idx] = slice.iter().map(|&i| src[i]).sum::<f64>() / slice.len() as f64;
            slice_idx += 1;
        });
        let rg = self.requires(x);
        Ok(self.push(Tensor::matrix(or, oc, out)?, Op::Mean { x, axis }, rg))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let v = t.data().iter().sum::<f64>() / t.numel() as f64;
        let rg = self.requires(x);
        self.push(Tensor::scalar(v), Op::MeanAll(x), rg)
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let v = self.value(x).data().iter().sum::<f64>();
        let rg = self.requires(x);
        self.push(Tensor::scalar(v), Op::SumAll(x), rg)
    }

    pub fn l2_normalize(&mut self, x: Var, axis: usize, eps: f64) -> Result<Var> {
        if eps <= 0.0 {
            return Err(Error::Config(format!("l2_normalize eps must be positive, got {eps}")));
        }
        let (r, c) = self.check_axis("l2_normalize", x, axis)?;
        let src = self.value(x).data();
        let mut out = vec![0.0; r * c];
        for_each_slice(r, c, axis, |slice| {
            let s: f64 = slice.iter().map(|&i| src[i] * src[i]).sum::<f64>().sqrt();
            let n = s.max(eps);
            for &i in slice {
                out[i] = src[i] / n;
            }
        });
        let rg = self.requires(x);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::L2Normalize { x, axis, eps }, rg))
    }

    // ── Structure ────────────────────────────────────────────────────

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Contract("concat of zero tensors".into()));
        }
        if axis > 1 {
            return Err(Error::dimension("concat", "axis 0 or 1", axis));
        }
        let other = 1 - axis;
        let fixed = self.value(parts[0]).shape()[other];
        let mut along = 0;
        for &p in parts {
            let s = self.value(p).shape();
            if s[other] != fixed {
                return Err(Error::dimension(
                    "concat",
                    format!("all parts size {fixed} on axis {other}"),
                    format!("{s:?}"),
                ));
            }
            along += s[axis];
        }
        let (r, c) = if axis == 0 { (along, fixed) } else { (fixed, along) };
        let mut out = vec![0.0; r * c];
        if axis == 0 {
            let mut offset = 0;
            for &p in parts {
                let t = self.value(p);
                out[offset..offset + t.numel()].copy_from_slice(t.data());
                offset += t.numel();
            }
        } else {
            let mut col = 0;
            for &p in parts {
                let t = self.value(p);
                let pc = t.cols();
                for i in 0..r {
                    out[i * c + col..i * c + col + pc].copy_from_slice(&t.data()[i * pc..(i + 1) * pc]);
                }
                col += pc;
            }
        }
        let rg = self.any_requires(parts);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::Concat { parts: parts.to_vec(), axis }, rg))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = (t.rows(), t.cols());
        if start + len > r || len == 0 {
            return Err(Error::dimension("slice_rows", format!("rows within 0..{r}"), format!("{start}..{}", start + len)));
        }
        let out = t.data()[start * c..(start + len) * c].to_vec();
        let rg = self.requires(x);
        Ok(self.push(Tensor::matrix(len, c, out)?, Op::SliceRows { x, start, len }, rg))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = (t.rows(), t.cols());
        if start + len > c || len == 0 {
            return Err(Error::dimension("slice_cols", format!("cols within 0..{c}"), format!("{start}..{}", start + len)));
        }
        let mut out = vec![0.0; r * len];
        for i in 0..r {
            out[i * len..(i + 1) * len].copy_from_slice(&t.data()[i * c + start..i * c + start + len]);
        }
        let rg = self.requires(x);
        Ok(self.push(Tensor::matrix(r, len, out)?, Op::SliceCols { x, start, len }, rg))
    }

    pub fn row_broadcast_add(&mut self, x: Var, row: Var) -> Result<Var> {
        let (r, c) = (self.value(x).rows(), self.value(x).cols());
        let rt = self.value(row);
        if rt.rows() != 1 || rt.cols() != c {
            return Err(Error::dimension("row_broadcast_add", format!("[1, {c}]"), format!("{:?}", rt.shape())));
        }
        let xd = self.value(x).data();
        let rd = self.value(row).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] = xd[i * c + j] + rd[j];
            }
        }
        let rg = self.any_requires(&[x, row]);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::RowBroadcastAdd { x, row }, rg))
    }

    pub fn row_broadcast_mul(&mut self, x: Var, row: Var) -> Result<Var> {
        let (r, c) = (self.value(x).rows(), self.value(x).cols());
        let rt = self.value(row);
        if rt.rows() != 1 || rt.cols() != c {
            return Err(Error::dimension("row_broadcast_mul", format!("[1, {c}]"), format!("{:?}", rt.shape())));
        }
        let xd = self.value(x).data();
        let rd = self.value(row).data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] = xd[i * c + j] * rd[j];
            }
        }
        let rg = self.any_requires(&[x, row]);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::RowBroadcastMul { x, row }, rg))
    }

    /// 1-D convolution over the row (token) axis.
    ///
    /// `x` is L×d_in, `w` is d_out×(d_in·kernel) with layout
    /// `w[o, c*kernel + j]`, `b` is 1×d_out. The input is right-padded with
    /// zero rows so every window fits; the output has ⌈L/stride⌉ rows.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, kernel: usize, stride: usize) -> Result<Var> {
        if kernel < 1 || stride < 1 {
            return Err(Error::Config(format!("conv1d kernel/stride must be >= 1, got {kernel}/{stride}")));
        }
        let (l, d_in) = (self.value(x).rows(), self.value(x).cols());
        let wt = self.value(w);
        let d_out = wt.rows();
        if wt.cols() != d_in * kernel {
            return Err(Error::dimension("conv1d weights", format!("[{d_out}, {}]", d_in * kernel), format!("{:?}", wt.shape())));
        }
        let bt = self.value(b);
        if bt.rows() != 1 || bt.cols() != d_out {
            return Err(Error::dimension("conv1d bias", format!("[1, {d_out}]"), format!("{:?}", bt.shape())));
        }
        let t_out = l.div_ceil(stride);
        let xd = self.value(x).data();
        let wd = self.value(w).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; t_out * d_out];
        for t in 0..t_out {
            for o in 0..d_out {
                let mut acc = bd[o];
                for c in 0..d_in {
                    for j in 0..kernel {
                        let srow = t * stride + j;
                        if srow < l {
                            acc += wd[o * (d_in * kernel) + c * kernel + j] * xd[srow * d_in + c];
                        }
                    }
                }
                out[t * d_out + o] = acc;
            }
        }
        let rg = self.any_requires(&[x, w, b]);
        Ok(self.push(Tensor::matrix(t_out, d_out, out)?, Op::Conv1d { x, w, b, kernel, stride }, rg))
    }

    /// Gather rows of an embedding table.
    pub fn embed_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (v, d) = (t.rows(), t.cols());
        if ids.is_empty() {
            return Err(Error::Contract("embed_rows with no ids".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Lookup(format!("embedding id {bad} outside table of {v} rows")));
        }
        let mut out = vec![0.0; ids.len() * d];
        for (row, &id) in ids.iter().enumerate() {
            out[row * d..(row + 1) * d].copy_from_slice(&t.data()[id * d..(id + 1) * d]);
        }
        let rg = self.requires(table);
        Ok(self.push(
            Tensor::matrix(ids.len(), d, out)?,
            Op::EmbedRows { table, ids: ids.to_vec() },
            rg,
        ))
    }

    /// Diagonal of a square matrix as a 1×d row.
    pub fn diag(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (r, c) = (t.rows(), t.cols());
        if r != c {
            return Err(Error::dimension("diag", "a square matrix", format!("{:?}", t.shape())));
        }
        let out: Vec<f64> = (0..r).map(|i| t.data()[i * c + i]).collect();
        let rg = self.requires(x);
        Ok(self.push(Tensor::row(out), Op::Diag(x), rg))
    }

    /// Errors if the value at `v` contains non-finite entries.
    pub fn check_finite(&self, v: Var, context: &str) -> Result<()> {
        self.value(v).check_finite(context)
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Populates per-node gradients; use
    /// [`Graph::grad`] or [`Graph::export_param_grads`] to read them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        for g in self.grads.iter_mut() {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![1.0]);

        for idx in (0..self.nodes.len()).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let Some(dout) = self.grads[idx].take() else { continue };
            let op = self.nodes[idx].op.clone();
            self.backward_op(idx, &op, &dout);
            // keep the gradient available for inspection
            self.grads[idx] = Some(dout);
        }
        self.backward_done = true;
        Ok(())
    }

    fn acc(&mut self, v: Var, contrib: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => {
                for (e, c) in existing.iter_mut().zip(contrib) {
                    *e += c;
                }
            }
            slot => *slot = Some(contrib),
        }
    }

    fn backward_op(&mut self, out_idx: usize, op: &Op, dout: &[f64]) {
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.acc(*a, dout.to_vec());
                self.acc(*b, dout.to_vec());
            }
            Op::Sub(a, b) => {
                self.acc(*a, dout.to_vec());
                self.acc(*b, dout.iter().map(|v| -v).collect());
            }
            Op::Mul(a, b) => {
                let da = zip_map(dout, self.value(*b).data(), |d, y| d * y);
                let db = zip_map(dout, self.value(*a).data(), |d, x| d * x);
                self.acc(*a, da);
                self.acc(*b, db);
            }
            Op::AddScalar(x, _) => self.acc(*x, dout.to_vec()),
            Op::Scale(x, c) => self.acc(*x, dout.iter().map(|v| v * c).collect()),
            Op::Sigmoid(x) => {
                let y = self.nodes[out_idx].value.data();
                let dx = zip_map(dout, y, |d, s| d * s * (1.0 - s));
                self.acc(*x, dx);
            }
            Op::Gelu(x) => {
                let dx = zip_map(dout, self.value(*x).data(), |d, v| d * gelu_grad(v));
                self.acc(*x, dx);
            }
            Op::Exp(x) => {
                let y = self.nodes[out_idx].value.data();
                self.acc(*x, zip_map(dout, y, |d, e| d * e));
            }
            Op::Log(x) => {
                let dx = zip_map(dout, self.value(*x).data(), |d, v| d / v);
                self.acc(*x, dx);
            }
            Op::Sqrt(x) => {
                let y = self.nodes[out_idx].value.data();
                self.acc(*x, zip_map(dout, y, |d, s| d / (2.0 * s)));
            }
            Op::Recip(x) => {
                let y = self.nodes[out_idx].value.data();
                self.acc(*x, zip_map(dout, y, |d, inv| -d * inv * inv));
            }
            Op::Matmul(a, b) => {
                let ta = self.value(*a);
                let tb = self.value(*b);
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                // dA = dC · Bᵀ
                let bt = transpose_raw(tb.data(), k, n);
                let da = mm(dout, m, n, &bt, k);
                // dB = Aᵀ · dC
                let at = transpose_raw(ta.data(), m, k);
                let db = mm(&at, k, m, dout, n);
                self.acc(*a, da);
                self.acc(*b, db);
            }
            Op::Transpose(x) => {
                let (r, c) = {
                    let t = &self.nodes[out_idx].value;
                    (t.rows(), t.cols())
                };
                self.acc(*x, transpose_raw(dout, r, c));
            }
            Op::Softmax { x, axis } => {
                let y = self.nodes[out_idx].value.data().to_vec();
                let t = self.value(*x);
                let (r, c) = (t.rows(), t.cols());
                let mut dx = vec![0.0; r * c];
                for_each_slice(r, c, *axis, |slice| {
                    let dot: f64 = slice.iter().map(|&i| dout[i] * y[i]).sum();
                    for &i in slice {
                        dx[i] = y[i] * (dout[i] - dot);
                    }
                });
                self.acc(*x, dx);
            }
            Op::LogSumExp { x, axis } => {
                let out = self.nodes[out_idx].value.data().to_vec();
                let t = self.value(*x);
                let (r, c) = (t.rows(), t.cols());
                let src = t.data().to_vec();
                let mut dx = vec![0.0; r * c];
                let mut slice_idx = 0;
                for_each_slice(r, c, *axis, |slice| {
                    for &i in slice {
                        dx[i] = dout[slice_idx] * (src[i] - out[slice_idx]).exp();
                    }
                    slice_idx += 1;
                });
                self.acc(*x, dx);
            }
            Op::LayerNorm { x, axis, eps } => {
                let y = self.nodes[out_idx].value.data().to_vec();
                let t = self.value(*x);
                let (r, c) = (t.rows(), t.cols());
                let src = t.data().to_vec();
                let mut dx = vec![0.0; r * c];
                for_each_slice(r, c, *axis, |slice| {
                    let n = slice.len() as f64;
                    let mu: f64 = slice.iter().map(|&i| src[i]).sum::<f64>() / n;
                    let var: f64 = slice.iter().map(|&i| (src[i] - mu) * (src[i] - mu)).sum::<f64>() / n;
                    let rstd = 1.0 / (var + eps).sqrt();
                    let mean_d: f64 = slice.iter().map(|&i| dout[i]).sum::<f64>() / n;
                    let mean_dy: f64 = slice.iter().map(|&i| dout[i] * y[i]).sum::<f64>() / n;
                    for &i in slice {
                        dx[i] = rstd * (dout[i] - mean_d - y[i] * mean_dy);
                    }
                });
                self.acc(*x, dx);
            }
            Op::Mean { x, axis } => {
                let t = self.value(*x);
                let (r, c) = (t.rows(), t.cols());
                let mut dx = vec![0.0; r * c];
                let mut slice_idx = 0;
                for_each_slice(r, c, *axis, |slice| {
                    let share = dout[slice_idx] / slice.len() as f64;
                    for &i in slice {
                        dx[i] = share;
                    }
                    slice_idx += 1;
                });
                self.acc(*x, dx);
            }
            Op::MeanAll(x) => {
                let n = self.value(*x).numel();
                self.acc(*x, vec![dout[0] / n as f64; n]);
            }
            Op::SumAll(x) => {
                let n = self.value(*x).numel();
                self.acc(*x, vec![dout[0]; n]);
            }
            Op::L2Normalize { x, axis, eps } => {
                let y = self.nodes[out_idx].value.data().to_vec();
                let t = self.value(*x);
                let (r, c) = (t.rows(), t.cols());
                let src = t.data().to_vec();
                let mut dx = vec![0.0; r * c];
                for_each_slice(r, c, *axis, |slice| {
                    let s: f64 = slice.iter().map(|&i| src[i] * src[i]).sum::<f64>().sqrt();
                    if s > *eps {
                        let dot: f64 = slice.iter().map(|&i| dout[i] * y[i]).sum();
                        for &i in slice {
                            dx[i] = (dout[i] - y[i] * dot) / s;
                        }
                    } else {
                        for &i in slice {
                            dx[i] = dout[i] / eps;
                        }
                    }
                });
                self.acc(*x, dx);
            }
            Op::Concat { parts, axis } => {
                let c_out = self.nodes[out_idx].value.cols();
                if *axis == 0 {
                    let mut offset = 0;
                    for &p in parts {
                        let n = self.value(p).numel();
                        self.acc(p, dout[offset..offset + n].to_vec());
                        offset += n;
                    }
                } else {
                    let r = self.nodes[out_idx].value.rows();
                    let mut col = 0;
                    for &p in parts {
                        let pc = self.value(p).cols();
                        let mut dp = vec![0.0; r * pc];
                        for i in 0..r {
                            dp[i * pc..(i + 1) * pc]
                                .copy_from_slice(&dout[i * c_out + col..i * c_out + col + pc]);
                        }
                        self.acc(p, dp);
                        col += pc;
                    }
                }
            }
            Op::SliceRows { x, start, len } => {
                let t = self.value(*x);
                let (r, c) = (t.rows(), t.cols());
                let mut dx = vec![0.0; r * c];
                dx[start * c..(start + len) * c].copy_from_slice(dout);
                self.acc(*x, dx);
            }
            Op::SliceCols { x, start, len } => {
                let t = self.value(*x);
                let (r, c) = (t.rows(), t.cols());
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    dx[i * c + start..i * c + start + len].copy_from_slice(&dout[i * len..(i + 1) * len]);
                }
                self.acc(*x, dx);
            }
            Op::RowBroadcastAdd { x, row } => {
                let (r, c) = {
                    let t = self.value(*x);
                    (t.rows(), t.cols())
                };
                self.acc(*x, dout.to_vec());
                let mut drow = vec![0.0; c];
                for i in 0..r {
                    for j in 0..c {
                        drow[j] += dout[i * c + j];
                    }
                }
                self.acc(*row, drow);
            }
            Op::RowBroadcastMul { x, row } => {
                let xd = self.value(*x).data().to_vec();
                let rd = self.value(*row).data().to_vec();
                let (r, c) = {
                    let t = self.value(*x);
                    (t.rows(), t.cols())
                };
                let mut dx = vec![0.0; r * c];
                let mut drow = vec![0.0; c];
                for i in 0..r {
                    for j in 0..c {
                        dx[i * c + j] = dout[i * c + j] * rd[j];
                        drow[j] += dout[i * c + j] * xd[i * c + j];
                    }
                }
                self.acc(*x, dx);
                self.acc(*row, drow);
            }
            Op::Conv1d { x, w, b, kernel, stride } => {
                let (l, d_in) = {
                    let t = self.value(*x);
                    (t.rows(), t.cols())
                };
                let d_out = self.value(*w).rows();
                let t_out = self.nodes[out_idx].value.rows();
                let xd = self.value(*x).data().to_vec();
                let wd = self.value(*w).data().to_vec();
                let mut dx = vec![0.0; l * d_in];
                let mut dw = vec![0.0; d_out * d_in * kernel];
                let mut db = vec![0.0; d_out];
                for t in 0..t_out {
                    for o in 0..d_out {
                        let d = dout[t * d_out + o];
                        db[o] += d;
                        for c in 0..d_in {
                            for j in 0..*kernel {
                                let srow = t * stride + j;
                                if srow < l {
                                    dw[o * (d_in * kernel) + c * kernel + j] += d * xd[srow * d_in + c];
                                    dx[srow * d_in + c] += d * wd[o * (d_in * kernel) + c * kernel + j];
                                }
                            }
                        }
                    }
                }
                self.acc(*x, dx);
                self.acc(*w, dw);
                self.acc(*b, db);
            }
            Op::EmbedRows { table, ids } => {
                let t = self.value(*table);
                let (v, d) = (t.rows(), t.cols());
                let mut dt = vec![0.0; v * d];
                for (row, &id) in ids.iter().enumerate() {
                    for j in 0..d {
                        dt[id * d + j] += dout[row * d + j];
                    }
                }
                self.acc(*table, dt);
            }
            Op::Diag(x) => {
                let c = self.value(*x).cols();
                let mut dx = vec![0.0; c * c];
                for (k, &d) in dout.iter().enumerate() {
                    dx[k * c + k] = d;
                }
                self.acc(*x, dx);
            }
        }
    }

    /// Accumulate gradients of bound parameter leaves into the set's grad
    /// buffers. Parameters the loss never reached keep their current
    /// (typically zero) gradient.
    pub fn export_param_grads(&self, set: &mut ParamSet) {
        for (idx, node) in self.nodes.iter().enumerate() {
            if let (Some(pid), Some(grad)) = (node.param, self.grads[idx].as_ref()) {
                set.accumulate_grad(pid, grad);
            }
        }
    }
}

// ── Raw kernels ──────────────────────────────────────────────────────

/// Row-major matrix product with a fixed i-k-j loop order, so each output
/// element accumulates over k in ascending order (matches a plain dot loop
/// bit-for-bit).
pub(crate) fn mm(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

pub(crate) fn transpose_raw(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

/// Visit index slices of a 2-D r×c tensor along `axis` (1 = rows, 0 = cols).
fn for_each_slice(r: usize, c: usize, axis: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = Vec::new();
    if axis == 1 {
        for i in 0..r {
            idx.clear();
            idx.extend((0..c).map(|j| i * c + j));
            f(&idx);
        }
    } else {
        for j in 0..c {
            idx.clear();
            idx.extend((0..r).map(|i| i * c + j));
            f(&idx);
        }
    }
}

fn zip_map(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Tanh-form GELU.
fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}
