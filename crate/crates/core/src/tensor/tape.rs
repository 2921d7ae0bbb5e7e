//! Reverse-mode tape.
//!
//! Every primitive appends one node holding its output and the inputs it was
//! computed from. Nodes are appended in evaluation order, so the node vector
//! is already topologically sorted and [`Tape::backward`] is one reverse sweep.
//! Parameters are read in place from the borrowed [`ParamStore`]; their
//! gradients are accumulated into a caller-owned [`Gradients`].

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use super::kernels::{gemm, MatRef};
use super::lstm::{self, LstmCache, LstmWeights};
use super::{Gradients, ParamId, ParamStore, Tensor, TensorError};
use crate::math;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// The three tensors of one LSTM direction: input map `(I, 4H)`, recurrent
/// map `(H, 4H)` and bias `(1, 4H)`.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub w: Var,
    pub u: Var,
    pub b: Var,
}

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Softmax(Var, usize),
    Mean(Var, usize),
    Sum(Var),
    Concat(Vec<Var>, usize),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    ScatterAddRows(Var, Vec<usize>),
    SegmentSoftmax(Var, Vec<usize>),
    HeadDot(Var, Var),
    HeadScale(Var, Var),
    Conv1d { x: Var, kernel: Var, bias: Var, width: usize, cols: Tensor },
    MaxPoolRows(Var, Vec<usize>),
    BiLstm { x: Var, fwd: LstmVars, bwd: LstmVars, caches: Box<[LstmCache; 2]> },
}

struct Node {
    value: Value,
    op: Op,
    needs_grad: bool,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn check_axis(op: &'static str, axis: usize) -> Result<(), TensorError> {
    if axis > 1 {
        return Err(TensorError::shape(op, format!("axis {} out of range for a matrix", axis)));
    }
    Ok(())
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape { params, nodes: Vec::with_capacity(256) }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.params.get(*id),
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        debug_assert!(value.is_finite(), "non-finite forward output");
        self.nodes.push(Node { value: Value::Owned(value), op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node { value: Value::Param(id), op: Op::Param(id), needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Records a tensor that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let ((m, k), (k2, n)) = (ta.dims2(), tb.dims2());
        if k != k2 {
            return Err(TensorError::shape(
                "matmul",
                format!("{:?} x {:?}", ta.shape(), tb.shape()),
            ));
        }
        let mut out = vec![0.0; m * n];
        gemm(MatRef::new(ta.data(), m, k), MatRef::new(tb.data(), k, n), &mut out, 0.0);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::raw(m, n, out), Op::MatMul(a, b), ng))
    }

    fn zip_with(
        &mut self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        mk: fn(Var, Var) -> Op,
    ) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(op, ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let out = Tensor { shape: ta.shape().to_vec(), data };
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(out, mk(a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("sub", a, b, |x, y| x - y, Op::Sub)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with("mul", a, b, |x, y| x * y, Op::Mul)
    }

    /// `x (N, C) + row (1, C)` broadcast over rows.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, TensorError> {
        let (tx, tr) = (self.value(x), self.value(row));
        let (n, c) = tx.dims2();
        if tr.len() != c {
            return Err(TensorError::shape("add_row", format!("{:?} + {:?}", tx.shape(), tr.shape())));
        }
        let mut data = tx.data().to_vec();
        for r in 0..n {
            for (d, b) in data[r * c..(r + 1) * c].iter_mut().zip(tr.data()) {
                *d += b;
            }
        }
        let ng = self.needs(x) || self.needs(row);
        Ok(self.push(Tensor::raw(n, c, data), Op::AddRow(x, row), ng))
    }

    /// `x (N, C) * col (N, 1)` broadcast over columns.
    pub fn mul_col(&mut self, x: Var, col: Var) -> Result<Var, TensorError> {
        let (tx, tc) = (self.value(x), self.value(col));
        let (n, c) = tx.dims2();
        if tc.len() != n {
            return Err(TensorError::shape("mul_col", format!("{:?} * {:?}", tx.shape(), tc.shape())));
        }
        let mut data = tx.data().to_vec();
        for r in 0..n {
            let s = tc.data()[r];
            data[r * c..(r + 1) * c].iter_mut().for_each(|d| *d *= s);
        }
        let ng = self.needs(x) || self.needs(col);
        Ok(self.push(Tensor::raw(n, c, data), Op::MulCol(x, col), ng))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let tx = self.value(x);
        let out = Tensor { shape: tx.shape().to_vec(), data: tx.data().iter().map(|v| f(*v)).collect() };
        let ng = self.needs(x);
        self.push(out, op, ng)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.map(x, |v| v * s, Op::Scale(x, s))
    }

    pub fn add_scalar(&mut self, x: Var, s: f64) -> Var {
        self.map(x, |v| v + s, Op::AddScalar(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| if v > 0.0 { v } else { 0.0 }, Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.map(x, |v| if v > 0.0 { v } else { slope * v }, Op::LeakyRelu(x, slope))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, math::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, math::sigmoid, Op::Sigmoid(x))
    }

    /// Softmax along `axis` (1: within each row, 0: within each column).
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        check_axis("softmax", axis)?;
        let tx = self.value(x);
        let (n, c) = tx.dims2();
        let mut data = tx.data().to_vec();
        let (outer, inner, stride_o, stride_i) = if axis == 1 { (n, c, c, 1) } else { (c, n, 1, c) };
        for o in 0..outer {
            let idx = |i: usize| o * stride_o + i * stride_i;
            let mx = (0..inner).map(|i| data[idx(i)]).fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for i in 0..inner {
                let e = math::exp(data[idx(i)] - mx);
                data[idx(i)] = e;
                s += e;
            }
            for i in 0..inner {
                data[idx(i)] /= s;
            }
        }
        let out = Tensor { shape: tx.shape().to_vec(), data };
        let ng = self.needs(x);
        Ok(self.push(out, Op::Softmax(x, axis), ng))
    }

    /// Mean along `axis`: 0 averages rows into `(1, C)`, 1 averages columns into `(N, 1)`.
    pub fn mean(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        check_axis("mean", axis)?;
        let tx = self.value(x);
        let (n, c) = tx.dims2();
        if (axis == 0 && n == 0) || (axis == 1 && c == 0) {
            return Err(TensorError::shape("mean", format!("empty axis {} of {:?}", axis, tx.shape())));
        }
        let out = if axis == 0 {
            let mut acc = vec![0.0; c];
            for r in 0..n {
                for (a, v) in acc.iter_mut().zip(tx.row(r)) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|a| *a /= n as f64);
            Tensor::raw(1, c, acc)
        } else {
            Tensor::raw(n, 1, (0..n).map(|r| tx.row(r).iter().sum::<f64>() / c as f64).collect())
        };
        let ng = self.needs(x);
        Ok(self.push(out, Op::Mean(x, axis), ng))
    }

    /// Sum of all elements, `(1, 1)`.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        let ng = self.needs(x);
        self.push(Tensor::scalar(s), Op::Sum(x), ng)
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var, TensorError> {
        check_axis("concat", axis)?;
        if parts.is_empty() {
            return Err(TensorError::shape("concat", "no inputs"));
        }
        let dims: Vec<(usize, usize)> = parts.iter().map(|p| self.value(*p).dims2()).collect();
        let out = if axis == 0 {
            let c = dims[0].1;
            if let Some(bad) = dims.iter().find(|d| d.1 != c) {
                return Err(TensorError::shape("concat", format!("axis 0 needs equal cols: {:?} vs {:?}", dims[0], bad)));
            }
            let mut data = Vec::with_capacity(dims.iter().map(|d| d.0 * c).sum());
            for p in parts {
                data.extend_from_slice(self.value(*p).data());
            }
            Tensor::raw(data.len() / c.max(1), c, data)
        } else {
            let n = dims[0].0;
            if let Some(bad) = dims.iter().find(|d| d.0 != n) {
                return Err(TensorError::shape("concat", format!("axis 1 needs equal rows: {:?} vs {:?}", dims[0], bad)));
            }
            let c: usize = dims.iter().map(|d| d.1).sum();
            let mut data = Vec::with_capacity(n * c);
            for r in 0..n {
                for p in parts {
                    data.extend_from_slice(self.value(*p).row(r));
                }
            }
            Tensor::raw(n, c, data)
        };
        let ng = parts.iter().any(|p| self.needs(*p));
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), ng))
    }

    pub fn slice_rows(&mut self, x: Var, range: Range<usize>) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (n, c) = tx.dims2();
        if range.start >= range.end || range.end > n {
            return Err(TensorError::shape("slice_rows", format!("{:?} of {} rows", range, n)));
        }
        let out = Tensor::raw(range.len(), c, tx.data()[range.start * c..range.end * c].to_vec());
        let ng = self.needs(x);
        Ok(self.push(out, Op::SliceRows(x, range.start), ng))
    }

    pub fn slice_cols(&mut self, x: Var, range: Range<usize>) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (n, c) = tx.dims2();
        if range.start >= range.end || range.end > c {
            return Err(TensorError::shape("slice_cols", format!("{:?} of {} cols", range, c)));
        }
        let mut data = Vec::with_capacity(n * range.len());
        for r in 0..n {
            data.extend_from_slice(&tx.row(r)[range.clone()]);
        }
        let out = Tensor::raw(n, range.len(), data);
        let ng = self.needs(x);
        Ok(self.push(out, Op::SliceCols(x, range.start), ng))
    }

    /// Rows `x[idx[0]], x[idx[1]], ...`.
    pub fn gather_rows(&mut self, x: Var, idx: &[usize]) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (n, c) = tx.dims2();
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= n {
                return Err(TensorError::shape("gather_rows", format!("row {} of {}", i, n)));
            }
            data.extend_from_slice(tx.row(i));
        }
        let out = Tensor::raw(idx.len(), c, data);
        let ng = self.needs(x);
        Ok(self.push(out, Op::GatherRows(x, idx.to_vec()), ng))
    }

    /// Table lookup; same as [`Tape::gather_rows`].
    pub fn embedding_lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var, TensorError> {
        self.gather_rows(table, ids)
    }

    /// `out[idx[e]] += x[e]` into an `(n_rows, C)` zero matrix.
    pub fn scatter_add_rows(&mut self, x: Var, idx: &[usize], n_rows: usize) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (n, c) = tx.dims2();
        if idx.len() != n {
            return Err(TensorError::shape("scatter_add_rows", format!("{} indices for {} rows", idx.len(), n)));
        }
        let mut data = vec![0.0; n_rows * c];
        for (e, &i) in idx.iter().enumerate() {
            if i >= n_rows {
                return Err(TensorError::shape("scatter_add_rows", format!("target {} of {}", i, n_rows)));
            }
            for (d, v) in data[i * c..(i + 1) * c].iter_mut().zip(tx.row(e)) {
                *d += v;
            }
        }
        let out = Tensor::raw(n_rows, c, data);
        let ng = self.needs(x);
        Ok(self.push(out, Op::ScatterAddRows(x, idx.to_vec()), ng))
    }

    /// Column-wise softmax within groups of rows sharing a segment id.
    pub fn segment_softmax(&mut self, x: Var, segments: &[usize], n_segments: usize) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (n, c) = tx.dims2();
        if segments.len() != n {
            return Err(TensorError::shape("segment_softmax", format!("{} segment ids for {} rows", segments.len(), n)));
        }
        if let Some(&s) = segments.iter().find(|&&s| s >= n_segments) {
            return Err(TensorError::shape("segment_softmax", format!("segment {} of {}", s, n_segments)));
        }
        let mut mx = vec![f64::NEG_INFINITY; n_segments * c];
        for (e, &s) in segments.iter().enumerate() {
            for (m, v) in mx[s * c..(s + 1) * c].iter_mut().zip(tx.row(e)) {
                *m = m.max(*v);
            }
        }
        let mut data = vec![0.0; n * c];
        let mut tot = vec![0.0; n_segments * c];
        for (e, &s) in segments.iter().enumerate() {
            for k in 0..c {
                let v = math::exp(tx.data()[e * c + k] - mx[s * c + k]);
                data[e * c + k] = v;
                tot[s * c + k] += v;
            }
        }
        for (e, &s) in segments.iter().enumerate() {
            for k in 0..c {
                data[e * c + k] /= tot[s * c + k];
            }
        }
        let out = Tensor::raw(n, c, data);
        let ng = self.needs(x);
        Ok(self.push(out, Op::SegmentSoftmax(x, segments.to_vec()), ng))
    }

    /// Per-head dot products: `z (N, H*d)` against `a (H, d)` gives `(N, H)`
    /// with `out[i, h] = z[i, h*d..(h+1)*d] · a[h]`.
    pub fn head_dot(&mut self, z: Var, a: Var) -> Result<Var, TensorError> {
        let (tz, ta) = (self.value(z), self.value(a));
        let (n, dz) = tz.dims2();
        let (heads, d) = ta.dims2();
        if heads * d != dz {
            return Err(TensorError::shape("head_dot", format!("{:?} vs heads {:?}", tz.shape(), ta.shape())));
        }
        let mut out = vec![0.0; n * heads];
        for i in 0..n {
            let zr = tz.row(i);
            for h in 0..heads {
                out[i * heads + h] = zr[h * d..(h + 1) * d].iter().zip(ta.row(h)).map(|(x, y)| x * y).sum();
            }
        }
        let ng = self.needs(z) || self.needs(a);
        Ok(self.push(Tensor::raw(n, heads, out), Op::HeadDot(z, a), ng))
    }

    /// Scales head blocks: `m (E, H*d)` by `alpha (E, H)` column-block-wise.
    pub fn head_scale(&mut self, m: Var, alpha: Var) -> Result<Var, TensorError> {
        let (tm, ta) = (self.value(m), self.value(alpha));
        let (e, dm) = tm.dims2();
        let (e2, heads) = ta.dims2();
        if e != e2 || heads == 0 || dm % heads != 0 {
            return Err(TensorError::shape("head_scale", format!("{:?} by {:?}", tm.shape(), ta.shape())));
        }
        let d = dm / heads;
        let mut data = tm.data().to_vec();
        for r in 0..e {
            for h in 0..heads {
                let s = ta.data()[r * heads + h];
                data[r * dm + h * d..r * dm + (h + 1) * d].iter_mut().for_each(|v| *v *= s);
            }
        }
        let ng = self.needs(m) || self.needs(alpha);
        Ok(self.push(Tensor::raw(e, dm, data), Op::HeadScale(m, alpha), ng))
    }

    /// 1-D convolution over rows of `x (L, E)` with a kernel `(width*E, C)` and
    /// bias `(1, C)`; zero padding keeps the output at `L` rows.
    pub fn conv1d(&mut self, x: Var, kernel: Var, bias: Var, width: usize) -> Result<Var, TensorError> {
        let (tx, tk, tb) = (self.value(x), self.value(kernel), self.value(bias));
        let (l, e) = tx.dims2();
        let (kr, c) = tk.dims2();
        if width == 0 || kr != width * e || tb.len() != c {
            return Err(TensorError::shape(
                "conv1d",
                format!("x {:?}, kernel {:?}, bias {:?}, width {}", tx.shape(), tk.shape(), tb.shape(), width),
            ));
        }
        let left = (width - 1) / 2;
        let mut cols = vec![0.0; l * width * e];
        for t in 0..l {
            for j in 0..width {
                let src = t as isize + j as isize - left as isize;
                if src >= 0 && (src as usize) < l {
                    let s = src as usize;
                    cols[t * width * e + j * e..t * width * e + (j + 1) * e].copy_from_slice(tx.row(s));
                }
            }
        }
        let mut out = vec![0.0; l * c];
        for r in 0..l {
            out[r * c..(r + 1) * c].copy_from_slice(tb.data());
        }
        gemm(MatRef::new(&cols, l, width * e), MatRef::new(tk.data(), width * e, c), &mut out, 1.0);
        let ng = self.needs(x) || self.needs(kernel) || self.needs(bias);
        let cols = Tensor::raw(l, width * e, cols);
        Ok(self.push(Tensor::raw(l, c, out), Op::Conv1d { x, kernel, bias, width, cols }, ng))
    }

    /// Column-wise max over rows, `(1, C)`.
    pub fn max_pool_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (n, c) = tx.dims2();
        if n == 0 {
            return Err(TensorError::shape("max_pool_rows", "no rows"));
        }
        let mut arg = vec![0usize; c];
        let mut out = tx.row(0).to_vec();
        for r in 1..n {
            for (k, v) in tx.row(r).iter().enumerate() {
                if *v > out[k] {
                    out[k] = *v;
                    arg[k] = r;
                }
            }
        }
        let ng = self.needs(x);
        Ok(self.push(Tensor::raw(1, c, out), Op::MaxPoolRows(x, arg), ng))
    }

    /// Bidirectional LSTM over the rows of `x (T, I)`; output `(T, 2H)` with
    /// the forward direction in the first `H` columns.
    pub fn bilstm(&mut self, x: Var, fwd: LstmVars, bwd: LstmVars) -> Result<Var, TensorError> {
        let tx = self.value(x);
        let (t_len, in_dim) = tx.dims2();
        let hid = self.value(fwd.u).rows();
        for (dir, lv) in [("forward", fwd), ("backward", bwd)] {
            let (w, u, b) = (self.value(lv.w).dims2(), self.value(lv.u).dims2(), self.value(lv.b).len());
            if w != (in_dim, 4 * hid) || u != (hid, 4 * hid) || b != 4 * hid {
                return Err(TensorError::shape(
                    "bilstm",
                    format!("{} weights w {:?} u {:?} b {} for input {:?}, hidden {}", dir, w, u, b, tx.shape(), hid),
                ));
            }
        }
        if t_len == 0 {
            return Err(TensorError::shape("bilstm", "empty sequence"));
        }
        let run = |lv: LstmVars, reverse: bool| {
            let wts = LstmWeights { w: self.value(lv.w).data(), u: self.value(lv.u).data(), b: self.value(lv.b).data() };
            lstm::forward(tx.data(), t_len, in_dim, hid, &wts, reverse)
        };
        let cf = run(fwd, false);
        let cb = run(bwd, true);
        let mut out = vec![0.0; t_len * 2 * hid];
        for t in 0..t_len {
            out[t * 2 * hid..t * 2 * hid + hid].copy_from_slice(&cf.hidden[t * hid..(t + 1) * hid]);
            out[t * 2 * hid + hid..(t + 1) * 2 * hid].copy_from_slice(&cb.hidden[t * hid..(t + 1) * hid]);
        }
        let ng = [x, fwd.w, fwd.u, fwd.b, bwd.w, bwd.u, bwd.b].iter().any(|v| self.needs(*v));
        Ok(self.push(
            Tensor::raw(t_len, 2 * hid, out),
            Op::BiLstm { x, fwd, bwd, caches: Box::new([cf, cb]) },
            ng,
        ))
    }

    /// Propagates `d(scale * loss)` back through the tape, accumulating into
    /// `grads` for every parameter reached.
    pub fn backward(&self, loss: Var, grads: &mut Gradients, scale: f64) -> Result<(), TensorError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(TensorError::Contract(format!("backward needs a scalar loss, got shape {:?}", lv.shape())));
        }
        if self.nodes.is_empty() {
            return Err(TensorError::Contract("backward on an empty tape".into()));
        }
        let mut adj: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        adj.resize_with(loss.0 + 1, || None);
        adj[loss.0] = Some(Tensor { shape: lv.shape().to_vec(), data: vec![scale] });
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.backprop_node(i, g, &mut adj, grads);
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: Tensor, adj: &mut [Option<Tensor>], grads: &mut Gradients) {
        let node = &self.nodes[i];
        let out = match &node.value {
            Value::Owned(t) => t,
            Value::Param(id) => self.params.get(*id),
        };
        // adds `t` into the adjoint of `v` when `v` participates in the gradient
        let send = |adj: &mut [Option<Tensor>], v: Var, t: Tensor| {
            if !self.nodes[v.0].needs_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(a) => a.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        let val = |v: Var| self.value(v);
        let shaped = |v: Var, data: Vec<f64>| Tensor { shape: val(v).shape().to_vec(), data };
        match &node.op {
            Op::Leaf => {}
            Op::Param(id) => grads.accumulate(*id, &g, 1.0),
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let ((m, k), (_, n)) = (ta.dims2(), tb.dims2());
                if self.needs(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(MatRef::new(g.data(), m, n), MatRef::new(tb.data(), k, n).t(), &mut da, 0.0);
                    send(adj, *a, shaped(*a, da));
                }
                if self.needs(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(MatRef::new(ta.data(), m, k).t(), MatRef::new(g.data(), m, n), &mut db, 0.0);
                    send(adj, *b, shaped(*b, db));
                }
            }
            Op::Add(a, b) => {
                send(adj, *a, g.clone());
                send(adj, *b, g);
            }
            Op::Sub(a, b) => {
                let neg = g.data().iter().map(|v| -v).collect();
                send(adj, *a, g.clone());
                send(adj, *b, shaped(*b, neg));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                if self.needs(*a) {
                    send(adj, *a, shaped(*a, g.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect()));
                }
                if self.needs(*b) {
                    send(adj, *b, shaped(*b, g.data().iter().zip(ta.data()).map(|(x, y)| x * y).collect()));
                }
            }
            Op::AddRow(x, row) => {
                let (n, c) = g.dims2();
                if self.needs(*row) {
                    let mut dr = vec![0.0; c];
                    for r in 0..n {
                        for (d, v) in dr.iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    send(adj, *row, shaped(*row, dr));
                }
                send(adj, *x, g);
            }
            Op::MulCol(x, col) => {
                let (n, c) = g.dims2();
                let (tx, tc) = (val(*x), val(*col));
                if self.needs(*col) {
                    let dc = (0..n).map(|r| g.row(r).iter().zip(tx.row(r)).map(|(a, b)| a * b).sum()).collect();
                    send(adj, *col, shaped(*col, dc));
                }
                if self.needs(*x) {
                    let mut dx = g.into_data();
                    for r in 0..n {
                        let s = tc.data()[r];
                        dx[r * c..(r + 1) * c].iter_mut().for_each(|v| *v *= s);
                    }
                    send(adj, *x, shaped(*x, dx));
                }
            }
            Op::Scale(x, s) => {
                let mut d = g.into_data();
                d.iter_mut().for_each(|v| *v *= *s);
                send(adj, *x, shaped(*x, d));
            }
            Op::AddScalar(x) => send(adj, *x, g),
            Op::Relu(x) => {
                let d = g.data().iter().zip(val(*x).data()).map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 }).collect();
                send(adj, *x, shaped(*x, d));
            }
            Op::LeakyRelu(x, slope) => {
                let d = g
                    .data()
                    .iter()
                    .zip(val(*x).data())
                    .map(|(gv, xv)| if *xv > 0.0 { *gv } else { slope * gv })
                    .collect();
                send(adj, *x, shaped(*x, d));
            }
            Op::Tanh(x) => {
                let d = g.data().iter().zip(out.data()).map(|(gv, y)| gv * (1.0 - y * y)).collect();
                send(adj, *x, shaped(*x, d));
            }
            Op::Sigmoid(x) => {
                let d = g.data().iter().zip(out.data()).map(|(gv, y)| gv * y * (1.0 - y)).collect();
                send(adj, *x, shaped(*x, d));
            }
            Op::Softmax(x, axis) => {
                let (n, c) = out.dims2();
                let (outer, inner, so, si) = if *axis == 1 { (n, c, c, 1) } else { (c, n, 1, c) };
                let mut d = vec![0.0; n * c];
                for o in 0..outer {
                    let idx = |k: usize| o * so + k * si;
                    let dot: f64 = (0..inner).map(|k| g.data()[idx(k)] * out.data()[idx(k)]).sum();
                    for k in 0..inner {
                        d[idx(k)] = out.data()[idx(k)] * (g.data()[idx(k)] - dot);
                    }
                }
                send(adj, *x, shaped(*x, d));
            }
            Op::Mean(x, axis) => {
                let (n, c) = val(*x).dims2();
                let mut d = vec![0.0; n * c];
                for r in 0..n {
                    for k in 0..c {
                        d[r * c + k] = if *axis == 0 { g.data()[k] / n as f64 } else { g.data()[r] / c as f64 };
                    }
                }
                send(adj, *x, shaped(*x, d));
            }
            Op::Sum(x) => {
                let n = val(*x).len();
                send(adj, *x, shaped(*x, vec![g.data()[0]; n]));
            }
            Op::Concat(parts, axis) => {
                if *axis == 0 {
                    let mut off = 0;
                    for p in parts {
                        let len = val(*p).len();
                        if self.needs(*p) {
                            send(adj, *p, shaped(*p, g.data()[off..off + len].to_vec()));
                        }
                        off += len;
                    }
                } else {
                    let (n, c) = g.dims2();
                    let mut col = 0;
                    for p in parts {
                        let pc = val(*p).cols();
                        if self.needs(*p) {
                            let mut d = Vec::with_capacity(n * pc);
                            for r in 0..n {
                                d.extend_from_slice(&g.data()[r * c + col..r * c + col + pc]);
                            }
                            send(adj, *p, shaped(*p, d));
                        }
                        col += pc;
                    }
                }
            }
            Op::SliceRows(x, start) => {
                let (n, c) = val(*x).dims2();
                let mut d = vec![0.0; n * c];
                d[start * c..start * c + g.len()].copy_from_slice(g.data());
                send(adj, *x, shaped(*x, d));
            }
            Op::SliceCols(x, start) => {
                let (n, c) = val(*x).dims2();
                let w = g.cols();
                let mut d = vec![0.0; n * c];
                for r in 0..n {
                    d[r * c + start..r * c + start + w].copy_from_slice(g.row(r));
                }
                send(adj, *x, shaped(*x, d));
            }
            Op::GatherRows(x, idx) => {
                let (n, c) = val(*x).dims2();
                let mut d = vec![0.0; n * c];
                for (e, &r) in idx.iter().enumerate() {
                    for (dv, gv) in d[r * c..(r + 1) * c].iter_mut().zip(g.row(e)) {
                        *dv += gv;
                    }
                }
                send(adj, *x, shaped(*x, d));
            }
            Op::ScatterAddRows(x, idx) => {
                let c = g.cols();
                let mut d = Vec::with_capacity(idx.len() * c);
                for &r in idx {
                    d.extend_from_slice(g.row(r));
                }
                send(adj, *x, shaped(*x, d));
            }
            Op::SegmentSoftmax(x, segs) => {
                let (n, c) = out.dims2();
                let n_seg = segs.iter().copied().max().map_or(0, |m| m + 1);
                let mut dot = vec![0.0; n_seg * c];
                for (e, &s) in segs.iter().enumerate() {
                    for k in 0..c {
                        dot[s * c + k] += g.data()[e * c + k] * out.data()[e * c + k];
                    }
                }
                let mut d = vec![0.0; n * c];
                for (e, &s) in segs.iter().enumerate() {
                    for k in 0..c {
                        d[e * c + k] = out.data()[e * c + k] * (g.data()[e * c + k] - dot[s * c + k]);
                    }
                }
                send(adj, *x, shaped(*x, d));
            }
            Op::HeadDot(z, a) => {
                let (tz, ta) = (val(*z), val(*a));
                let (n, dz) = tz.dims2();
                let (heads, d) = ta.dims2();
                if self.needs(*z) {
                    let mut gz = vec![0.0; n * dz];
                    for i in 0..n {
                        for h in 0..heads {
                            let gv = g.data()[i * heads + h];
                            for (o, av) in gz[i * dz + h * d..i * dz + (h + 1) * d].iter_mut().zip(ta.row(h)) {
                                *o = gv * av;
                            }
                        }
                    }
                    send(adj, *z, shaped(*z, gz));
                }
                if self.needs(*a) {
                    let mut ga = vec![0.0; heads * d];
                    for i in 0..n {
                        let zr = tz.row(i);
                        for h in 0..heads {
                            let gv = g.data()[i * heads + h];
                            for (o, zv) in ga[h * d..(h + 1) * d].iter_mut().zip(&zr[h * d..(h + 1) * d]) {
                                *o += gv * zv;
                            }
                        }
                    }
                    send(adj, *a, shaped(*a, ga));
                }
            }
            Op::HeadScale(m, alpha) => {
                let (tm, ta) = (val(*m), val(*alpha));
                let (e, dm) = tm.dims2();
                let heads = ta.cols();
                let d = dm / heads;
                if self.needs(*alpha) {
                    let mut gal = vec![0.0; e * heads];
                    for r in 0..e {
                        for h in 0..heads {
                            let s = r * dm + h * d;
                            gal[r * heads + h] =
                                g.data()[s..s + d].iter().zip(&tm.data()[s..s + d]).map(|(x, y)| x * y).sum();
                        }
                    }
                    send(adj, *alpha, shaped(*alpha, gal));
                }
                if self.needs(*m) {
                    let mut gm = g.into_data();
                    for r in 0..e {
                        for h in 0..heads {
                            let s = ta.data()[r * heads + h];
                            gm[r * dm + h * d..r * dm + (h + 1) * d].iter_mut().for_each(|v| *v *= s);
                        }
                    }
                    send(adj, *m, shaped(*m, gm));
                }
            }
            Op::Conv1d { x, kernel, bias, width, cols } => {
                let (l, c) = g.dims2();
                let tk = val(*kernel);
                let e = val(*x).cols();
                let kw = width * e;
                if self.needs(*kernel) {
                    let mut dk = vec![0.0; kw * c];
                    gemm(MatRef::new(cols.data(), l, kw).t(), MatRef::new(g.data(), l, c), &mut dk, 0.0);
                    send(adj, *kernel, shaped(*kernel, dk));
                }
                if self.needs(*bias) {
                    let mut db = vec![0.0; c];
                    for r in 0..l {
                        for (d, v) in db.iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    send(adj, *bias, shaped(*bias, db));
                }
                if self.needs(*x) {
                    let mut dcols = vec![0.0; l * kw];
                    gemm(MatRef::new(g.data(), l, c), MatRef::new(tk.data(), kw, c).t(), &mut dcols, 0.0);
                    let left = (width - 1) / 2;
                    let mut dx = vec![0.0; l * e];
                    for t in 0..l {
                        for j in 0..*width {
                            let src = t as isize + j as isize - left as isize;
                            if src >= 0 && (src as usize) < l {
                                let s = src as usize;
                                let from = &dcols[t * kw + j * e..t * kw + (j + 1) * e];
                                for (d, v) in dx[s * e..(s + 1) * e].iter_mut().zip(from) {
                                    *d += v;
                                }
                            }
                        }
                    }
                    send(adj, *x, shaped(*x, dx));
                }
            }
            Op::MaxPoolRows(x, arg) => {
                let (n, c) = val(*x).dims2();
                let mut d = vec![0.0; n * c];
                for (k, &r) in arg.iter().enumerate() {
                    d[r * c + k] = g.data()[k];
                }
                send(adj, *x, shaped(*x, d));
            }
            Op::BiLstm { x, fwd, bwd, caches } => {
                let tx = val(*x);
                let (t_len, in_dim) = tx.dims2();
                let hid = val(fwd.u).rows();
                let mut dx = self.needs(*x).then(|| vec![0.0; t_len * in_dim]);
                for (dir, (lv, cache)) in [(*fwd, &caches[0]), (*bwd, &caches[1])].into_iter().enumerate() {
                    let mut dh = vec![0.0; t_len * hid];
                    for t in 0..t_len {
                        dh[t * hid..(t + 1) * hid]
                            .copy_from_slice(&g.data()[t * 2 * hid + dir * hid..t * 2 * hid + (dir + 1) * hid]);
                    }
                    let wts = LstmWeights { w: val(lv.w).data(), u: val(lv.u).data(), b: val(lv.b).data() };
                    let lg = lstm::backward(
                        tx.data(),
                        t_len,
                        in_dim,
                        hid,
                        &wts,
                        cache,
                        &dh,
                        dir == 1,
                        dx.as_deref_mut(),
                    );
                    send(adj, lv.w, shaped(lv.w, lg.dw));
                    send(adj, lv.u, shaped(lv.u, lg.du));
                    send(adj, lv.b, shaped(lv.b, lg.db));
                }
                if let Some(dx) = dx {
                    send(adj, *x, shaped(*x, dx));
                }
            }
        }
    }
}
