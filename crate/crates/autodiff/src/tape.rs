//! Tape-based reverse-mode differentiation.
//!
//! A [`Tape`] records every operation applied to its [`Var`] handles. Calling
//! [`Tape::backward`] on a scalar node walks the tape in reverse and returns
//! [`Gradients`] for every recorded node, including parameter leaves.
//!
//! Parameters are borrowed from the caller rather than copied: a tape built
//! with [`Tape::with_params`] refers to the parameter matrices for its whole
//! lifetime, and [`Tape::param`] records each parameter at most once.
//!
//! One tape per trajectory (or per forward pass); drop it and build a new one
//! for the next.

use std::rc::Rc;

use crate::matrix::Matrix;

/// `sqrt(2/pi)`, used by the tanh approximation of GeLU.
const GELU_C: f64 = 0.797_884_560_802_865_4;
const GELU_A: f64 = 0.044_715;

/// Variance floor inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{op}: index {index} out of range for {shape:?}")]
    Index {
        op: &'static str,
        index: usize,
        shape: (usize, usize),
    },
    #[error("{op}: row {row} has no unmasked entry")]
    EmptyMask { op: &'static str, row: usize },
    #[error("backward: loss must be 1x1, got {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("param index {index} out of range ({count} parameters)")]
    UnknownParam { index: usize, count: usize },
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A boolean mask shared between the forward value and its backward pass.
/// `true` marks an entry that takes part in the operation.
#[derive(Clone, Debug)]
pub struct Mask {
    rows: usize,
    cols: usize,
    keep: Rc<Vec<bool>>,
}

impl Mask {
    pub fn new(rows: usize, cols: usize, keep: Vec<bool>) -> Self {
        assert_eq!(keep.len(), rows * cols, "mask length does not match shape");
        Self {
            rows,
            cols,
            keep: Rc::new(keep),
        }
    }

    pub fn all(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![true; rows * cols])
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.keep[r * self.cols + c]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Mul(Var, Var),
    ScaleBy(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Transpose(Var),
    RowSoftmax(Var, Option<Mask>),
    LogSoftmaxRow(Var, Option<Mask>),
    Gelu(Var),
    LayerNorm(Var, Vec<f64>),
    Mean(Var),
    Sum(Var),
    SelectRows(Var, Vec<usize>),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Log(Var),
    Exp(Var),
    Sigmoid(Var),
    LogSigmoid(Var),
}

enum Value<'p> {
    Owned(Matrix),
    Borrowed(&'p Matrix),
}

impl Value<'_> {
    #[inline]
    fn get(&self) -> &Matrix {
        match self {
            Value::Owned(m) => m,
            Value::Borrowed(m) => m,
        }
    }
}

struct Node<'p> {
    value: Value<'p>,
    op: Op,
}

/// Records a computation for reverse-mode differentiation.
pub struct Tape<'p> {
    params: &'p [Matrix],
    param_nodes: Vec<Option<Var>>,
    nodes: Vec<Node<'p>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Tape<'p> {
    /// A tape without parameters; only [`Tape::input`] leaves.
    pub fn new() -> Self {
        Self::with_params(&[])
    }

    pub fn with_params(params: &'p [Matrix]) -> Self {
        Self {
            params,
            param_nodes: vec![None; params.len()],
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    #[inline]
    pub fn value(&self, v: Var) -> &Matrix {
        self.nodes[v.0].value.get()
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).item()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf holding `value`. Gradients are still computed for it.
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input)
    }

    /// The leaf for parameter `index`; repeated calls return the same node.
    pub fn param(&mut self, index: usize) -> Result<Var> {
        let count = self.params.len();
        let slot = self
            .param_nodes
            .get(index)
            .copied()
            .ok_or(AutodiffError::UnknownParam { index, count })?;
        if let Some(v) = slot {
            return Ok(v);
        }
        self.nodes.push(Node {
            value: Value::Borrowed(&self.params[index]),
            op: Op::Param,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes[index] = Some(v);
        Ok(v)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(AutodiffError::Shape {
                op,
                lhs: sa,
                rhs: sb,
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(AutodiffError::Shape {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let out = self.value(a).matmul(self.value(b));
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Adds the `1 x c` row vector `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr.0 != 1 || sr.1 != sa.1 {
            return Err(AutodiffError::Shape {
                op: "add_row",
                lhs: sa,
                rhs: sr,
            });
        }
        let mut out = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..sa.0 {
            for (o, x) in out.row_slice_mut(i).iter_mut().zip(&r) {
                *o += x;
            }
        }
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    /// Multiplies every row of `a` elementwise by the `1 x c` row vector `row`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr.0 != 1 || sr.1 != sa.1 {
            return Err(AutodiffError::Shape {
                op: "mul_row",
                lhs: sa,
                rhs: sr,
            });
        }
        let mut out = self.value(a).clone();
        let r = self.value(row).data().to_vec();
        for i in 0..sa.0 {
            for (o, x) in out.row_slice_mut(i).iter_mut().zip(&r) {
                *o *= x;
            }
        }
        Ok(self.push(out, Op::MulRow(a, row)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// Multiplies every entry of `a` by the 1x1 node `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        let ss = self.shape(s);
        if ss != (1, 1) {
            return Err(AutodiffError::Shape {
                op: "scale_by",
                lhs: self.shape(a),
                rhs: ss,
            });
        }
        let k = self.scalar(s);
        let out = self.value(a).map(|x| x * k);
        Ok(self.push(out, Op::ScaleBy(a, s)))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        self.push(out, Op::Scale(a, k))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x + k);
        self.push(out, Op::AddScalar(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(out, Op::Transpose(a))
    }

    fn check_mask(&self, op: &'static str, a: Var, mask: &Option<Mask>) -> Result<()> {
        if let Some(m) = mask {
            let s = self.shape(a);
            if m.shape() != s {
                return Err(AutodiffError::Shape {
                    op,
                    lhs: s,
                    rhs: m.shape(),
                });
            }
            for r in 0..s.0 {
                if !(0..s.1).any(|c| m.get(r, c)) {
                    return Err(AutodiffError::EmptyMask { op, row: r });
                }
            }
        }
        Ok(())
    }

    /// Softmax along each row. Masked-out entries get probability exactly 0.
    pub fn row_softmax(&mut self, a: Var, mask: Option<Mask>) -> Result<Var> {
        self.check_mask("row_softmax", a, &mask)?;
        let x = self.value(a);
        let (rows, cols) = x.shape();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let keep = |c: usize| mask.as_ref().is_none_or(|m| m.get(r, c));
            let xr = x.row_slice(r);
            let max = (0..cols)
                .filter(|&c| keep(c))
                .map(|c| xr[c])
                .fold(f64::NEG_INFINITY, f64::max);
            let o = out.row_slice_mut(r);
            let mut z = 0.0;
            for c in 0..cols {
                if keep(c) {
                    o[c] = (xr[c] - max).exp();
                    z += o[c];
                }
            }
            o.iter_mut().for_each(|v| *v /= z);
        }
        Ok(self.push(out, Op::RowSoftmax(a, mask)))
    }

    /// Log-softmax along each row. Masked-out entries hold `-inf` and receive
    /// no gradient; only unmasked entries should be consumed downstream.
    pub fn log_softmax_rows(&mut self, a: Var, mask: Option<Mask>) -> Result<Var> {
        self.check_mask("log_softmax_rows", a, &mask)?;
        let x = self.value(a);
        let (rows, cols) = x.shape();
        let mut out = Matrix::filled(rows, cols, f64::NEG_INFINITY);
        for r in 0..rows {
            let keep = |c: usize| mask.as_ref().is_none_or(|m| m.get(r, c));
            let xr = x.row_slice(r);
            let max = (0..cols)
                .filter(|&c| keep(c))
                .map(|c| xr[c])
                .fold(f64::NEG_INFINITY, f64::max);
            let lse = max
                + (0..cols)
                    .filter(|&c| keep(c))
                    .map(|c| (xr[c] - max).exp())
                    .sum::<f64>()
                    .ln();
            let o = out.row_slice_mut(r);
            for c in 0..cols {
                if keep(c) {
                    o[c] = xr[c] - lse;
                }
            }
        }
        Ok(self.push(out, Op::LogSoftmaxRow(a, mask)))
    }

    /// GeLU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| {
            let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
            0.5 * x * (1.0 + t)
        });
        self.push(out, Op::Gelu(a))
    }

    /// Per-row standardization without affine parameters.
    pub fn layer_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        let mut out = Matrix::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let xr = x.row_slice(r);
            let mean = xr.iter().sum::<f64>() / cols as f64;
            let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (o, v) in out.row_slice_mut(r).iter_mut().zip(xr) {
                *o = (v - mean) * inv;
            }
            inv_std.push(inv);
        }
        self.push(out, Op::LayerNorm(a, inv_std))
    }

    /// Mean of all entries, as 1x1.
    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let out = Matrix::scalar(m.sum() / m.len() as f64);
        self.push(out, Op::Mean(a))
    }

    /// Sum of all entries, as 1x1.
    pub fn sum(&mut self, a: Var) -> Var {
        let out = Matrix::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// Gathers rows (indices may repeat).
    pub fn select_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        let mut out = Matrix::zeros(indices.len(), cols);
        for (i, &r) in indices.iter().enumerate() {
            if r >= rows {
                return Err(AutodiffError::Index {
                    op: "select_rows",
                    index: r,
                    shape: (rows, cols),
                });
            }
            out.row_slice_mut(i).copy_from_slice(x.row_slice(r));
        }
        Ok(self.push(out, Op::SelectRows(a, indices.to_vec())))
    }

    /// Columns `start..start+len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        if start + len > cols {
            return Err(AutodiffError::Index {
                op: "slice_cols",
                index: start + len,
                shape: (rows, cols),
            });
        }
        let mut out = Matrix::zeros(rows, len);
        for r in 0..rows {
            out.row_slice_mut(r)
                .copy_from_slice(&x.row_slice(r)[start..start + len]);
        }
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |&p| self.shape(p).0);
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.0 != rows {
                return Err(AutodiffError::Shape {
                    op: "concat_cols",
                    lhs: (rows, cols),
                    rhs: s,
                });
            }
            cols += s.1;
        }
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let x = self.value(p);
            let w = x.cols();
            for r in 0..rows {
                out.row_slice_mut(r)[offset..offset + w].copy_from_slice(x.row_slice(r));
            }
            offset += w;
        }
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::ln);
        self.push(out, Op::Log(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    /// `log(sigmoid(x))`, computed without overflow.
    pub fn log_sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(log_sigmoid);
        self.push(out, Op::LogSigmoid(a))
    }

    /// Reverse pass from a 1x1 `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let s = self.shape(loss);
        if s != (1, 1) {
            return Err(AutodiffError::NonScalarLoss(s));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }

        let mut params: Vec<Option<Matrix>> = (0..self.params.len()).map(|_| None).collect();
        for (p, node) in self.param_nodes.iter().enumerate() {
            if let Some(v) = node {
                params[p] = grads[v.0].clone();
            }
        }
        Ok(Gradients {
            nodes: grads,
            params,
        })
    }

    fn propagate(&self, i: usize, g: &Matrix, grads: &mut [Option<Matrix>]) {
        let y = self.nodes[i].value.get();
        match &self.nodes[i].op {
            Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, g.matmul_t(vb));
                accumulate(grads, *b, va.t_matmul(g));
            }
            Op::Add(a, b) => {
                accumulate_ref(grads, *a, g, 1.0);
                accumulate_ref(grads, *b, g, 1.0);
            }
            Op::Sub(a, b) => {
                accumulate_ref(grads, *a, g, 1.0);
                accumulate_ref(grads, *b, g, -1.0);
            }
            Op::AddRow(a, row) => {
                accumulate_ref(grads, *a, g, 1.0);
                let mut gr = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (o, x) in gr.data_mut().iter_mut().zip(g.row_slice(r)) {
                        *o += x;
                    }
                }
                accumulate(grads, *row, gr);
            }
            Op::MulRow(a, row) => {
                let (va, vr) = (self.value(*a), self.value(*row));
                let (rows, cols) = va.shape();
                let mut ga = Matrix::zeros(rows, cols);
                let mut gr = Matrix::zeros(1, cols);
                for r in 0..rows {
                    let (gi, ai) = (g.row_slice(r), va.row_slice(r));
                    for c in 0..cols {
                        ga.row_slice_mut(r)[c] = gi[c] * vr.data()[c];
                        gr.data_mut()[c] += gi[c] * ai[c];
                    }
                }
                accumulate(grads, *a, ga);
                accumulate(grads, *row, gr);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                accumulate(grads, *a, g.zip_map(vb, |x, y| x * y));
                accumulate(grads, *b, g.zip_map(va, |x, y| x * y));
            }
            Op::ScaleBy(a, s) => {
                let k = self.scalar(*s);
                let va = self.value(*a);
                let gs: f64 = g.data().iter().zip(va.data()).map(|(x, y)| x * y).sum();
                accumulate_ref(grads, *a, g, k);
                accumulate(grads, *s, Matrix::scalar(gs));
            }
            Op::Scale(a, k) => accumulate_ref(grads, *a, g, *k),
            Op::AddScalar(a) => accumulate_ref(grads, *a, g, 1.0),
            Op::Transpose(a) => accumulate(grads, *a, g.transpose()),
            Op::RowSoftmax(a, mask) => {
                let (rows, cols) = y.shape();
                let mut gx = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (c, o) in gx.row_slice_mut(r).iter_mut().enumerate() {
                        if mask.as_ref().is_none_or(|m| m.get(r, c)) {
                            *o = yr[c] * (gr[c] - dot);
                        }
                    }
                }
                accumulate(grads, *a, gx);
            }
            Op::LogSoftmaxRow(a, mask) => {
                let (rows, cols) = y.shape();
                let mut gx = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    let keep = |c: usize| mask.as_ref().is_none_or(|m| m.get(r, c));
                    let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                    let gsum: f64 = (0..cols).filter(|&c| keep(c)).map(|c| gr[c]).sum();
                    for (c, o) in gx.row_slice_mut(r).iter_mut().enumerate() {
                        if keep(c) {
                            *o = gr[c] - yr[c].exp() * gsum;
                        }
                    }
                }
                accumulate(grads, *a, gx);
            }
            Op::Gelu(a) => {
                let x = self.value(*a);
                let gx = x.zip_map(g, |x, g| {
                    let u = GELU_C * (x + GELU_A * x * x * x);
                    let t = u.tanh();
                    let du = GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                    g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)
                });
                accumulate(grads, *a, gx);
            }
            Op::LayerNorm(a, inv_std) => {
                let (rows, cols) = y.shape();
                let n = cols as f64;
                let mut gx = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                    let mean_g = gr.iter().sum::<f64>() / n;
                    let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n;
                    for (c, o) in gx.row_slice_mut(r).iter_mut().enumerate() {
                        *o = inv_std[r] * (gr[c] - mean_g - yr[c] * mean_gy);
                    }
                }
                accumulate(grads, *a, gx);
            }
            Op::Mean(a) => {
                let (r, c) = self.shape(*a);
                let v = g.item() / (r * c) as f64;
                accumulate(grads, *a, Matrix::filled(r, c, v));
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                accumulate(grads, *a, Matrix::filled(r, c, g.item()));
            }
            Op::SelectRows(a, indices) => {
                let (r, c) = self.shape(*a);
                let mut gx = Matrix::zeros(r, c);
                for (i, &src) in indices.iter().enumerate() {
                    for (o, x) in gx.row_slice_mut(src).iter_mut().zip(g.row_slice(i)) {
                        *o += x;
                    }
                }
                accumulate(grads, *a, gx);
            }
            Op::SliceCols(a, start) => {
                let (r, c) = self.shape(*a);
                let w = g.cols();
                let mut gx = Matrix::zeros(r, c);
                for row in 0..r {
                    gx.row_slice_mut(row)[*start..*start + w].copy_from_slice(g.row_slice(row));
                }
                accumulate(grads, *a, gx);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (r, w) = self.shape(p);
                    let mut gp = Matrix::zeros(r, w);
                    for row in 0..r {
                        gp.row_slice_mut(row)
                            .copy_from_slice(&g.row_slice(row)[offset..offset + w]);
                    }
                    accumulate(grads, p, gp);
                    offset += w;
                }
            }
            Op::Log(a) => {
                let x = self.value(*a);
                accumulate(grads, *a, g.zip_map(x, |g, x| g / x));
            }
            Op::Exp(a) => accumulate(grads, *a, g.zip_map(y, |g, y| g * y)),
            Op::Sigmoid(a) => accumulate(grads, *a, g.zip_map(y, |g, y| g * y * (1.0 - y))),
            Op::LogSigmoid(a) => {
                let x = self.value(*a);
                accumulate(grads, *a, g.zip_map(x, |g, x| g * sigmoid(-x)));
            }
        }
    }
}

#[inline]
fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.axpy(1.0, &g),
        slot @ None => *slot = Some(g),
    }
}

#[inline]
fn accumulate_ref(grads: &mut [Option<Matrix>], v: Var, g: &Matrix, k: f64) {
    match &mut grads[v.0] {
        Some(existing) => existing.axpy(k, g),
        slot @ None => {
            *slot = Some(if k == 1.0 { g.clone() } else { g.map(|x| x * k) });
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Result of [`Tape::backward`].
pub struct Gradients {
    nodes: Vec<Option<Matrix>>,
    params: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to node `v`; `None` if the loss does
    /// not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient with respect to parameter `index`, if it was used.
    pub fn param(&self, index: usize) -> Option<&Matrix> {
        self.params.get(index).and_then(Option::as_ref)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }
}
