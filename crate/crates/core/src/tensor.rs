//! Dense matrices with a reverse-mode gradient tape.
//!
//! A [`Tape`] records every operation applied to the [`Tensor`] handles it
//! hands out. [`Tape::backward`] walks the record once in reverse and returns
//! the gradient of a 1x1 loss with respect to every recorded tensor.
//!
//! Sparse matrices only appear as constant left operands ([`Tape::spmm`]);
//! no gradient is ever taken with respect to adjacency.

use std::cell::{Cell, RefCell};
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a matrix recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tensor {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Tensor {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn id(&self) -> usize {
        self.id
    }
}

/// Compressed sparse row matrix used as a constant operand.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds from per-row `(column, value)` lists.
    pub fn from_rows(cols: usize, rows: Vec<Vec<(usize, T)>>) -> Result<Self> {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        let nrows = rows.len();
        for row in rows {
            for (c, v) in row {
                if c >= cols {
                    return Err(Error::Shape(format!("column {c} out of range for {cols} columns")));
                }
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            rows: nrows,
            cols,
            indptr,
            indices,
            values,
        })
    }

    /// Stacks square dense blocks along the diagonal.
    pub fn block_diagonal<'a>(blocks: impl IntoIterator<Item = &'a Array2<T>>) -> Self {
        let mut rows = Vec::new();
        let mut offset = 0;
        for b in blocks {
            for r in b.rows() {
                rows.push(
                    r.iter()
                        .enumerate()
                        .filter(|(_, v)| **v != T::zero())
                        .map(|(c, &v)| (offset + c, v))
                        .collect(),
                );
            }
            offset += b.ncols();
        }
        Self::from_rows(offset, rows).expect("block columns in range")
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out[[r, self.indices[k]]] += self.values[k];
            }
        }
        out
    }

    fn mul_dense(&self, dense: &Array2<T>) -> Array2<T> {
        let mut out = Array2::zeros((self.rows, dense.ncols()));
        for r in 0..self.rows {
            let mut row = out.row_mut(r);
            for k in self.indptr[r]..self.indptr[r + 1] {
                row.scaled_add(self.values[k], &dense.row(self.indices[k]));
            }
        }
        out
    }

    fn transpose_mul_dense(&self, dense: &Array2<T>) -> Array2<T> {
        let mut out = Array2::zeros((self.cols, dense.ncols()));
        for r in 0..self.rows {
            let src = dense.row(r);
            for k in self.indptr[r]..self.indptr[r + 1] {
                out.row_mut(self.indices[k]).scaled_add(self.values[k], &src);
            }
        }
        out
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(usize, usize),
    SpMM(Arc<CsrMatrix<T>>, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, T),
    AddScalar(usize),
    Hadamard(usize, usize),
    Transpose(usize),
    RowSelect(usize, Vec<usize>),
    RowMeanExcluding(usize, usize),
    Sum(usize),
    Mean(usize),
    Sigmoid(usize),
    Relu(usize),
    Log(usize),
    Exp(usize),
    Softplus(usize),
    Clamp(usize, T, T),
    RowNormSq(usize),
    DotRows(usize, usize),
    NormalizeRows(usize, T),
}

struct Node<T> {
    value: Array2<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Record of one forward computation.
///
/// Not shared across threads; build one per worker.
pub struct Tape<T> {
    nodes: RefCell<Vec<Node<T>>>,
    consumed: Cell<bool>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_err(op: &str, a: (usize, usize), b: (usize, usize)) -> Error {
    Error::Shape(format!("{op}: incompatible shapes {a:?} and {b:?}"))
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
            consumed: Cell::new(false),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Array2<T>, op: Op<T>, requires_grad: bool, name: &str) -> Result<Tensor> {
        if value.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("{name} produced a non-finite value")));
        }
        let (rows, cols) = value.dim();
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Tensor { id, rows, cols })
    }

    fn needs(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn unary(&self, a: Tensor, name: &str, f: impl Fn(T) -> T, op: Op<T>) -> Result<Tensor> {
        let v = self.nodes.borrow()[a.id].value.mapv(f);
        self.push(v, op, self.needs(&[a.id]), name)
    }

    /// Trainable input; gradients flow to it.
    pub fn leaf(&self, value: Array2<T>) -> Result<Tensor> {
        self.push(value, Op::Leaf, true, "leaf")
    }

    /// Input that never receives a gradient.
    pub fn constant(&self, value: Array2<T>) -> Result<Tensor> {
        self.push(value, Op::Leaf, false, "constant")
    }

    pub fn value(&self, t: Tensor) -> Array2<T> {
        self.nodes.borrow()[t.id].value.clone()
    }

    /// Value of a 1x1 tensor.
    pub fn scalar(&self, t: Tensor) -> T {
        self.nodes.borrow()[t.id].value[[0, 0]]
    }

    pub fn matmul(&self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.cols != b.rows {
            return Err(shape_err("matmul", a.shape(), b.shape()));
        }
        let v = {
            let n = self.nodes.borrow();
            n[a.id].value.dot(&n[b.id].value)
        };
        self.push(v, Op::MatMul(a.id, b.id), self.needs(&[a.id, b.id]), "matmul")
    }

    /// Constant sparse matrix times a recorded dense tensor.
    pub fn spmm(&self, s: &Arc<CsrMatrix<T>>, b: Tensor) -> Result<Tensor> {
        if s.cols != b.rows {
            return Err(shape_err("spmm", s.shape(), b.shape()));
        }
        let v = s.mul_dense(&self.nodes.borrow()[b.id].value);
        self.push(v, Op::SpMM(Arc::clone(s), b.id), self.needs(&[b.id]), "spmm")
    }

    fn binary(
        &self,
        a: Tensor,
        b: Tensor,
        name: &str,
        f: impl Fn(T, T) -> T,
        op: Op<T>,
    ) -> Result<Tensor> {
        if a.shape() != b.shape() {
            return Err(shape_err(name, a.shape(), b.shape()));
        }
        let v = {
            let n = self.nodes.borrow();
            let mut out = n[a.id].value.clone();
            out.zip_mut_with(&n[b.id].value, |x, &y| *x = f(*x, y));
            out
        };
        self.push(v, op, self.needs(&[a.id, b.id]), name)
    }

    pub fn add(&self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a.id, b.id))
    }

    pub fn sub(&self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a.id, b.id))
    }

    pub fn hadamard(&self, a: Tensor, b: Tensor) -> Result<Tensor> {
        self.binary(a, b, "hadamard", |x, y| x * y, Op::Hadamard(a.id, b.id))
    }

    pub fn mul_scalar(&self, a: Tensor, c: T) -> Result<Tensor> {
        self.unary(a, "mul_scalar", |x| x * c, Op::Scale(a.id, c))
    }

    pub fn add_scalar(&self, a: Tensor, c: T) -> Result<Tensor> {
        self.unary(a, "add_scalar", |x| x + c, Op::AddScalar(a.id))
    }

    pub fn transpose(&self, a: Tensor) -> Result<Tensor> {
        let v = self.nodes.borrow()[a.id].value.t().to_owned();
        self.push(v, Op::Transpose(a.id), self.needs(&[a.id]), "transpose")
    }

    /// Gathers rows by index; indices may repeat.
    pub fn row_select(&self, a: Tensor, rows: &[usize]) -> Result<Tensor> {
        if let Some(&r) = rows.iter().find(|&&r| r >= a.rows) {
            return Err(Error::Shape(format!("row_select: row {r} out of range for {} rows", a.rows)));
        }
        let v = self.nodes.borrow()[a.id].value.select(Axis(0), rows);
        self.push(v, Op::RowSelect(a.id, rows.to_vec()), self.needs(&[a.id]), "row_select")
    }

    /// Mean of all rows except `skip`, as a 1 x cols tensor.
    pub fn row_mean_excluding(&self, a: Tensor, skip: usize) -> Result<Tensor> {
        if a.rows < 2 || skip >= a.rows {
            return Err(Error::Shape(format!(
                "row_mean_excluding({skip}) needs at least two rows, got {}",
                a.rows
            )));
        }
        let v = {
            let n = self.nodes.borrow();
            let m = &n[a.id].value;
            let total = m.sum_axis(Axis(0)) - m.row(skip);
            (total / T::lit((a.rows - 1) as f64)).insert_axis(Axis(0))
        };
        self.push(v, Op::RowMeanExcluding(a.id, skip), self.needs(&[a.id]), "row_mean_excluding")
    }

    pub fn sum(&self, a: Tensor) -> Result<Tensor> {
        let s = self.nodes.borrow()[a.id].value.sum();
        self.push(Array2::from_elem((1, 1), s), Op::Sum(a.id), self.needs(&[a.id]), "sum")
    }

    pub fn mean(&self, a: Tensor) -> Result<Tensor> {
        if a.rows * a.cols == 0 {
            return Err(Error::Shape("mean of empty tensor".into()));
        }
        let s = self.nodes.borrow()[a.id].value.sum() / T::lit((a.rows * a.cols) as f64);
        self.push(Array2::from_elem((1, 1), s), Op::Mean(a.id), self.needs(&[a.id]), "mean")
    }

    pub fn sigmoid(&self, a: Tensor) -> Result<Tensor> {
        self.unary(a, "sigmoid", sigmoid, Op::Sigmoid(a.id))
    }

    pub fn relu(&self, a: Tensor) -> Result<Tensor> {
        self.unary(a, "relu", |x| x.max(T::zero()), Op::Relu(a.id))
    }

    pub fn log(&self, a: Tensor) -> Result<Tensor> {
        if self.nodes.borrow()[a.id].value.iter().any(|&x| x <= T::zero()) {
            return Err(Error::Numeric("log of a non-positive value".into()));
        }
        self.unary(a, "log", |x| x.ln(), Op::Log(a.id))
    }

    pub fn exp(&self, a: Tensor) -> Result<Tensor> {
        self.unary(a, "exp", |x| x.exp(), Op::Exp(a.id))
    }

    /// `ln(1 + e^x)` evaluated without overflow.
    pub fn softplus(&self, a: Tensor) -> Result<Tensor> {
        self.unary(a, "softplus", softplus, Op::Softplus(a.id))
    }

    /// Elementwise clamp; the gradient passes only where the input is inside
    /// `[lo, hi]`.
    pub fn clamp(&self, a: Tensor, lo: T, hi: T) -> Result<Tensor> {
        self.unary(a, "clamp", |x| x.max(lo).min(hi), Op::Clamp(a.id, lo, hi))
    }

    /// Squared L2 norm of each row, as rows x 1.
    pub fn l2_norm_sq_rows(&self, a: Tensor) -> Result<Tensor> {
        let v = self.nodes.borrow()[a.id]
            .value
            .map_axis(Axis(1), |r| r.dot(&r))
            .insert_axis(Axis(1));
        self.push(v, Op::RowNormSq(a.id), self.needs(&[a.id]), "l2_norm_sq_rows")
    }

    /// Row-wise dot products of two equally shaped tensors, as rows x 1.
    pub fn dot_rows(&self, a: Tensor, b: Tensor) -> Result<Tensor> {
        if a.shape() != b.shape() {
            return Err(shape_err("dot_rows", a.shape(), b.shape()));
        }
        let v = {
            let n = self.nodes.borrow();
            let (x, y) = (&n[a.id].value, &n[b.id].value);
            Array2::from_shape_fn((a.rows, 1), |(r, _)| x.row(r).dot(&y.row(r)))
        };
        self.push(v, Op::DotRows(a.id, b.id), self.needs(&[a.id, b.id]), "dot_rows")
    }

    /// Divides each row by `max(norm, eps)`.
    pub fn normalize_rows(&self, a: Tensor, eps: T) -> Result<Tensor> {
        let v = {
            let n = self.nodes.borrow();
            let mut out = n[a.id].value.clone();
            for mut r in out.rows_mut() {
                let norm = r.dot(&r).sqrt().max(eps);
                r.mapv_inplace(|x| x / norm);
            }
            out
        };
        self.push(v, Op::NormalizeRows(a.id, eps), self.needs(&[a.id]), "normalize_rows")
    }

    /// Reverse pass from a 1x1 `loss`. A tape can be differentiated once.
    pub fn backward(&self, loss: Tensor) -> Result<Gradients<T>> {
        if loss.shape() != (1, 1) {
            return Err(Error::Shape(format!("backward needs a 1x1 loss, got {:?}", loss.shape())));
        }
        if self.consumed.replace(true) {
            return Err(Error::State("backward already ran on this tape".into()));
        }
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Array2<T>>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Array2::ones((1, 1)));

        fn acc<T: Scalar>(grads: &mut [Option<Array2<T>>], id: usize, g: Array2<T>) {
            match &mut grads[id] {
                Some(existing) => *existing += &g,
                slot => *slot = Some(g),
            }
        }

        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if node.requires_grad {
                let val = |i: usize| &nodes[i].value;
                let wants = |i: usize| nodes[i].requires_grad;
                match &node.op {
                    Op::Leaf => {}
                    Op::MatMul(a, b) => {
                        if wants(*a) {
                            acc(&mut grads, *a, g.dot(&val(*b).t()));
                        }
                        if wants(*b) {
                            acc(&mut grads, *b, val(*a).t().dot(&g));
                        }
                    }
                    Op::SpMM(s, b) => acc(&mut grads, *b, s.transpose_mul_dense(&g)),
                    Op::Add(a, b) => {
                        if wants(*a) {
                            acc(&mut grads, *a, g.clone());
                        }
                        if wants(*b) {
                            acc(&mut grads, *b, g.clone());
                        }
                    }
                    Op::Sub(a, b) => {
                        if wants(*a) {
                            acc(&mut grads, *a, g.clone());
                        }
                        if wants(*b) {
                            acc(&mut grads, *b, g.mapv(|x| -x));
                        }
                    }
                    Op::Scale(a, c) => acc(&mut grads, *a, &g * *c),
                    Op::AddScalar(a) => acc(&mut grads, *a, g.clone()),
                    Op::Hadamard(a, b) => {
                        if wants(*a) {
                            acc(&mut grads, *a, &g * val(*b));
                        }
                        if wants(*b) {
                            acc(&mut grads, *b, &g * val(*a));
                        }
                    }
                    Op::Transpose(a) => acc(&mut grads, *a, g.t().to_owned()),
                    Op::RowSelect(a, rows) => {
                        let mut out = Array2::zeros(val(*a).dim());
                        for (i, &r) in rows.iter().enumerate() {
                            let mut dst = out.row_mut(r);
                            dst += &g.row(i);
                        }
                        acc(&mut grads, *a, out);
                    }
                    Op::RowMeanExcluding(a, skip) => {
                        let (r, c) = val(*a).dim();
                        let scale = T::lit((r - 1) as f64).recip();
                        let mut out = Array2::zeros((r, c));
                        for i in (0..r).filter(|i| i != skip) {
                            out.row_mut(i).scaled_add(scale, &g.row(0));
                        }
                        acc(&mut grads, *a, out);
                    }
                    Op::Sum(a) => acc(&mut grads, *a, Array2::from_elem(val(*a).dim(), g[[0, 0]])),
                    Op::Mean(a) => {
                        let n = T::lit(val(*a).len() as f64);
                        acc(&mut grads, *a, Array2::from_elem(val(*a).dim(), g[[0, 0]] / n));
                    }
                    Op::Sigmoid(a) => {
                        let y = &node.value;
                        acc(&mut grads, *a, &g * &y.mapv(|s| s * (T::one() - s)));
                    }
                    Op::Relu(a) => {
                        let mask = val(*a).mapv(|x| if x > T::zero() { T::one() } else { T::zero() });
                        acc(&mut grads, *a, &g * &mask);
                    }
                    Op::Log(a) => acc(&mut grads, *a, &g / val(*a)),
                    Op::Exp(a) => acc(&mut grads, *a, &g * &node.value),
                    Op::Softplus(a) => acc(&mut grads, *a, &g * &val(*a).mapv(sigmoid)),
                    Op::Clamp(a, lo, hi) => {
                        let mask = val(*a).mapv(|x| {
                            if x >= *lo && x <= *hi {
                                T::one()
                            } else {
                                T::zero()
                            }
                        });
                        acc(&mut grads, *a, &g * &mask);
                    }
                    Op::RowNormSq(a) => {
                        let two = T::lit(2.0);
                        acc(&mut grads, *a, val(*a) * &g * two);
                    }
                    Op::NormalizeRows(a, eps) => {
                        let x = val(*a);
                        let y = &node.value;
                        let mut out = Array2::zeros(x.dim());
                        for r in 0..x.nrows() {
                            let norm = x.row(r).dot(&x.row(r)).sqrt();
                            let gr = g.row(r);
                            let mut dst = out.row_mut(r);
                            if norm > *eps {
                                let proj = gr.dot(&y.row(r));
                                dst.assign(&gr);
                                dst.scaled_add(-proj, &y.row(r));
                                dst.mapv_inplace(|v| v / norm);
                            } else {
                                dst.assign(&gr.mapv(|v| v / *eps));
                            }
                        }
                        acc(&mut grads, *a, out);
                    }
                    Op::DotRows(a, b) => {
                        if wants(*a) {
                            acc(&mut grads, *a, val(*b) * &g);
                        }
                        if wants(*b) {
                            acc(&mut grads, *b, val(*a) * &g);
                        }
                    }
                }
            }
            grads[id] = Some(g);
        }

        let grads = grads
            .into_iter()
            .zip(nodes.iter())
            .map(|(g, n)| {
                if matches!(n.op, Op::Leaf) && n.requires_grad {
                    Some(g.unwrap_or_else(|| Array2::zeros(n.value.dim())))
                } else {
                    g
                }
            })
            .collect();
        Ok(Gradients { grads })
    }
}

/// Gradients of one backward pass, indexed by tensor.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Array2<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to `t`; leaves that did not influence the loss
    /// report zeros, intermediate tensors off the loss path report `None`.
    pub fn get(&self, t: Tensor) -> Option<&Array2<T>> {
        self.grads.get(t.id).and_then(|g| g.as_ref())
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Trainable matrix with its gradient accumulator and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Array2<T>,
    pub grad: Array2<T>,
    pub adam_m: Array2<T>,
    pub adam_v: Array2<T>,
    pub step_count: u64,
}

impl<T: Scalar> Parameter<T> {
    pub fn new(name: impl Into<String>, value: Array2<T>) -> Self {
        let dim = value.dim();
        Self {
            name: name.into(),
            value,
            grad: Array2::zeros(dim),
            adam_m: Array2::zeros(dim),
            adam_v: Array2::zeros(dim),
            step_count: 0,
        }
    }

    /// Records the current value as a trainable leaf.
    pub fn bind(&self, tape: &Tape<T>) -> Result<Tensor> {
        tape.leaf(self.value.clone())
    }

    /// Adds the gradient of the tensor this parameter was bound to.
    pub fn accumulate(&mut self, grads: &Gradients<T>, bound: Tensor) {
        if let Some(g) = grads.get(bound) {
            self.grad += g;
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(T::zero());
    }
}

/// Adam with bias correction and no weight decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    /// Applies one update to each parameter and zeroes its gradient.
    pub fn step<'a, T: Scalar>(&self, params: impl IntoIterator<Item = &'a mut Parameter<T>>) {
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let (lr, eps) = (T::lit(self.lr), T::lit(self.eps));
        for p in params {
            p.step_count += 1;
            let t = p.step_count as i32;
            let c1 = T::one() - b1.powi(t);
            let c2 = T::one() - b2.powi(t);
            ndarray::Zip::from(&mut p.value)
                .and(&mut p.adam_m)
                .and(&mut p.adam_v)
                .and(&p.grad)
                .for_each(|w, m, v, &g| {
                    *m = b1 * *m + (T::one() - b1) * g;
                    *v = b2 * *v + (T::one() - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                });
            p.zero_grad();
        }
    }
}

/// Uniform Glorot initialization in `±sqrt(6 / (rows + cols))`.
pub fn xavier_init<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || T::lit(rng.random_range(-bound..=bound)))
}
