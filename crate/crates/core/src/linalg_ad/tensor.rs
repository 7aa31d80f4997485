//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A [`Graph`] owns every intermediate value. [`Tensor`] is a cheap `Copy`
//! handle into it. Leaves created with [`Graph::param`] receive gradients
//! when [`Graph::backward`] runs; leaves from [`Graph::constant`] do not.
//!
//! Binary elementwise ops broadcast along any axis of length 1 (row vectors,
//! column vectors and 1×1 scalars), which is all the losses need.

use super::svd::svd;
use crate::{Error, Mat, Result};
use std::cell::{Cell, RefCell};
use std::fmt;
use std::rc::Rc;

#[derive(Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    MatMul(usize, usize),
    Transpose(usize),
    Exp(usize),
    Ln(usize),
    Tanh(usize),
    Relu(usize),
    Sigmoid(usize),
    Square(usize),
    Sqrt(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Sum(usize),
    RowSums(usize),
    ColSums(usize),
    SliceRows(usize, usize),
    SliceCols(usize, usize),
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    Gather(usize, Rc<Vec<usize>>),
    Reshape(usize),
    ClampMin(usize, f64),
    GroupPairDist(usize, usize),
    Nuclear(usize, Rc<Mat>),
    Spectral(usize, Rc<Mat>),
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::Exp(..) => "exp",
            Op::Ln(..) => "log",
            Op::Tanh(..) => "tanh",
            Op::Relu(..) => "relu",
            Op::Sigmoid(..) => "sigmoid",
            Op::Square(..) => "square",
            Op::Sqrt(..) => "sqrt",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::Sum(..) => "sum",
            Op::RowSums(..) => "row_sums",
            Op::ColSums(..) => "col_sums",
            Op::SliceRows(..) => "slice_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::ConcatRows(..) => "concat_rows",
            Op::ConcatCols(..) => "concat_cols",
            Op::Gather(..) => "gather_rows",
            Op::Reshape(..) => "reshape",
            Op::ClampMin(..) => "clamp_min",
            Op::GroupPairDist(..) => "group_pair_sq_dists",
            Op::Nuclear(..) => "nuclear_norm",
            Op::Spectral(..) => "spectral_norm",
        }
    }
}

struct Node {
    value: Rc<Mat>,
    op: Op,
    needs_grad: bool,
    grad: Option<Mat>,
}

/// Owner of a computation tape.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
    backward_done: Cell<bool>,
}

/// Handle to a value on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Tensor<'g> {
    g: &'g Graph,
    id: usize,
}

impl fmt::Debug for Tensor<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (r, c) = self.shape();
        write!(f, "Tensor#{}({}x{})", self.id, r, c)
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&self, value: Mat, op: Op, needs_grad: bool) -> Tensor<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            needs_grad,
            grad: None,
        });
        Tensor {
            g: self,
            id: nodes.len() - 1,
        }
    }

    /// Trainable leaf.
    pub fn param(&self, value: Mat) -> Tensor<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&self, value: Mat) -> Tensor<'_> {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, x: f64) -> Tensor<'_> {
        self.constant(Mat::from_element(1, 1, x))
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn value(&self, id: usize) -> Rc<Mat> {
        self.nodes.borrow()[id].value.clone()
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    /// First node holding a non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<(usize, &'static str)> {
        self.nodes
            .borrow()
            .iter()
            .enumerate()
            .find(|(_, n)| n.value.iter().any(|x| !x.is_finite()))
            .map(|(i, n)| (i, n.op.name()))
    }

    /// Clears stored gradients so that `backward` may run again.
    pub fn reset_grads(&self) {
        for n in self.nodes.borrow_mut().iter_mut() {
            n.grad = None;
        }
        self.backward_done.set(false);
    }

    /// Accumulates d(loss)/d(leaf) into every trainable leaf.
    pub fn backward(&self, loss: Tensor<'_>) -> Result<()> {
        if self.backward_done.get() {
            return Err(Error::BackwardTwice);
        }
        let (r, c) = loss.shape();
        if (r, c) != (1, 1) {
            return Err(Error::NonScalarLoss(r, c));
        }
        if let Some((id, name)) = self.first_non_finite() {
            return Err(Error::NonFinite(format!(
                "forward value of node {id} ({name})"
            )));
        }
        let mut nodes = self.nodes.borrow_mut();
        let mut grads: Vec<Option<Mat>> = vec![None; loss.id + 1];
        grads[loss.id] = Some(Mat::from_element(1, 1, 1.0));
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !nodes[id].needs_grad {
                continue;
            }
            let op = nodes[id].op.clone();
            if let Op::Leaf = op {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient of leaf {id}")));
                }
                match &mut nodes[id].grad {
                    Some(acc) => *acc += g,
                    slot => *slot = Some(g),
                }
                continue;
            }
            let out = nodes[id].value.clone();
            let val = |i: usize| nodes[i].value.clone();
            let mut contribs: Vec<(usize, Mat)> = Vec::with_capacity(2);
            match op {
                Op::Leaf => unreachable!(),
                Op::Add(a, b) => {
                    let (va, vb) = (val(a), val(b));
                    contribs.push((a, reduce_to(&g, va.nrows(), va.ncols())));
                    contribs.push((b, reduce_to(&g, vb.nrows(), vb.ncols())));
                }
                Op::Sub(a, b) => {
                    let (va, vb) = (val(a), val(b));
                    contribs.push((a, reduce_to(&g, va.nrows(), va.ncols())));
                    contribs.push((b, -reduce_to(&g, vb.nrows(), vb.ncols())));
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (val(a), val(b));
                    let ga = broadcast_zip(&g, &vb, |x, y| x * y);
                    let gb = broadcast_zip(&g, &va, |x, y| x * y);
                    contribs.push((a, reduce_to(&ga, va.nrows(), va.ncols())));
                    contribs.push((b, reduce_to(&gb, vb.nrows(), vb.ncols())));
                }
                Op::Div(a, b) => {
                    let (va, vb) = (val(a), val(b));
                    let ga = broadcast_zip(&g, &vb, |x, y| x / y);
                    // d(a/b)/db = −(a/b)/b
                    let q = broadcast_zip(&out, &vb, |o, y| -o / y);
                    let gb = g.component_mul(&q);
                    contribs.push((a, reduce_to(&ga, va.nrows(), va.ncols())));
                    contribs.push((b, reduce_to(&gb, vb.nrows(), vb.ncols())));
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (val(a), val(b));
                    contribs.push((a, &g * vb.transpose()));
                    contribs.push((b, va.tr_mul(&g)));
                }
                Op::Transpose(a) => contribs.push((a, g.transpose())),
                Op::Exp(a) => contribs.push((a, g.component_mul(&out))),
                Op::Ln(a) => {
                    let va = val(a);
                    contribs.push((a, g.zip_map(&va, |x, y| x / y)));
                }
                Op::Tanh(a) => contribs.push((a, g.zip_map(&out, |x, t| x * (1.0 - t * t)))),
                Op::Relu(a) => {
                    let va = val(a);
                    contribs.push((a, g.zip_map(&va, |x, y| if y > 0.0 { x } else { 0.0 })));
                }
                Op::Sigmoid(a) => contribs.push((a, g.zip_map(&out, |x, s| x * s * (1.0 - s)))),
                Op::Square(a) => {
                    let va = val(a);
                    contribs.push((a, g.zip_map(&va, |x, y| 2.0 * x * y)));
                }
                Op::Sqrt(a) => contribs.push((a, g.zip_map(&out, |x, s| 0.5 * x / s))),
                Op::Scale(a, s) => contribs.push((a, g * s)),
                Op::AddScalar(a) => contribs.push((a, g)),
                Op::Sum(a) => {
                    let va = val(a);
                    contribs.push((a, Mat::from_element(va.nrows(), va.ncols(), g[(0, 0)])));
                }
                Op::RowSums(a) => {
                    let va = val(a);
                    contribs.push((a, Mat::from_fn(va.nrows(), va.ncols(), |i, _| g[(i, 0)])));
                }
                Op::ColSums(a) => {
                    let va = val(a);
                    contribs.push((a, Mat::from_fn(va.nrows(), va.ncols(), |_, j| g[(0, j)])));
                }
                Op::SliceRows(a, start) => {
                    let va = val(a);
                    let mut full = Mat::zeros(va.nrows(), va.ncols());
                    full.rows_mut(start, g.nrows()).copy_from(&g);
                    contribs.push((a, full));
                }
                Op::SliceCols(a, start) => {
                    let va = val(a);
                    let mut full = Mat::zeros(va.nrows(), va.ncols());
                    full.columns_mut(start, g.ncols()).copy_from(&g);
                    contribs.push((a, full));
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let r = nodes[p].value.nrows();
                        contribs.push((p, g.rows(off, r).into_owned()));
                        off += r;
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let c = nodes[p].value.ncols();
                        contribs.push((p, g.columns(off, c).into_owned()));
                        off += c;
                    }
                }
                Op::Gather(a, idx) => {
                    let va = val(a);
                    let mut full = Mat::zeros(va.nrows(), va.ncols());
                    for (i, &src) in idx.iter().enumerate() {
                        let mut row = full.row_mut(src);
                        row += g.row(i);
                    }
                    contribs.push((a, full));
                }
                Op::Reshape(a) => {
                    let va = val(a);
                    contribs.push((a, reshape_row_major(&g, va.nrows(), va.ncols())));
                }
                Op::ClampMin(a, lo) => {
                    let va = val(a);
                    contribs.push((a, g.zip_map(&va, |x, y| if y > lo { x } else { 0.0 })));
                }
                Op::GroupPairDist(a, k) => {
                    let va = val(a);
                    contribs.push((a, group_pair_dist_grad(&va, k, &g)));
                }
                Op::Nuclear(a, uvt) => contribs.push((a, uvt.as_ref() * g[(0, 0)])),
                Op::Spectral(a, uvt) => contribs.push((a, uvt.as_ref() * g[(0, 0)])),
            }
            for (p, gp) in contribs {
                if !nodes[p].needs_grad {
                    continue;
                }
                match &mut grads[p] {
                    Some(acc) => *acc += gp,
                    slot => *slot = Some(gp),
                }
            }
        }
        self.backward_done.set(true);
        Ok(())
    }
}

/// Sums a broadcast gradient back down to the operand shape.
fn reduce_to(g: &Mat, r: usize, c: usize) -> Mat {
    let mut out = if g.nrows() != r {
        debug_assert_eq!(r, 1);
        row_sums_of(g)
    } else {
        g.clone()
    };
    if out.ncols() != c {
        debug_assert_eq!(c, 1);
        out = col_sums_of(&out);
    }
    out
}

/// 1×c vector of column totals.
fn row_sums_of(m: &Mat) -> Mat {
    Mat::from_fn(1, m.ncols(), |_, j| m.column(j).sum())
}

/// r×1 vector of row totals.
fn col_sums_of(m: &Mat) -> Mat {
    let mut out = Mat::zeros(m.nrows(), 1);
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out[(i, 0)] += m[(i, j)];
        }
    }
    out
}

fn broadcast_shape(a: &Mat, b: &Mat) -> (usize, usize) {
    let dim = |x: usize, y: usize, axis: &str| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!(
                "cannot broadcast {}x{} with {}x{} along {axis}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )
        }
    };
    (
        dim(a.nrows(), b.nrows(), "rows"),
        dim(a.ncols(), b.ncols(), "columns"),
    )
}

fn broadcast_zip(a: &Mat, b: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    if a.shape() == b.shape() {
        return a.zip_map(b, f);
    }
    let (r, c) = broadcast_shape(a, b);
    let (ar, ac) = (a.nrows() == 1, a.ncols() == 1);
    let (br, bc) = (b.nrows() == 1, b.ncols() == 1);
    Mat::from_fn(r, c, |i, j| {
        let x = a[(if ar { 0 } else { i }, if ac { 0 } else { j })];
        let y = b[(if br { 0 } else { i }, if bc { 0 } else { j })];
        f(x, y)
    })
}

fn reshape_row_major(m: &Mat, r: usize, c: usize) -> Mat {
    assert_eq!(m.len(), r * c, "reshape must preserve the element count");
    let oc = m.ncols();
    Mat::from_fn(r, c, |i, j| {
        let flat = i * c + j;
        m[(flat / oc, flat % oc)]
    })
}

/// Squared distances / d between every ordered pair of rows inside each
/// consecutive group of `k` rows. Output row n holds group n, entry i·k + j.
pub(crate) fn group_pair_dist(x: &Mat, k: usize) -> Mat {
    let n = x.nrows() / k;
    let d = x.ncols();
    let inv_d = 1.0 / d as f64;
    Mat::from_fn(n, k * k, |g, e| {
        let (i, j) = (g * k + e / k, g * k + e % k);
        let mut s = 0.0;
        for l in 0..d {
            let diff = x[(i, l)] - x[(j, l)];
            s += diff * diff;
        }
        s * inv_d
    })
}

fn group_pair_dist_grad(x: &Mat, k: usize, g: &Mat) -> Mat {
    let n = x.nrows() / k;
    let d = x.ncols();
    let s = 2.0 / d as f64;
    let mut out = Mat::zeros(x.nrows(), d);
    for grp in 0..n {
        for a in 0..k {
            for b in 0..k {
                let w = g[(grp, a * k + b)] * s;
                if w == 0.0 || a == b {
                    continue;
                }
                let (i, j) = (grp * k + a, grp * k + b);
                for l in 0..d {
                    let diff = w * (x[(i, l)] - x[(j, l)]);
                    out[(i, l)] += diff;
                    out[(j, l)] -= diff;
                }
            }
        }
    }
    out
}

impl<'g> Tensor<'g> {
    pub fn graph(&self) -> &'g Graph {
        self.g
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Rc<Mat> {
        self.g.value(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        let v = self.g.value(self.id);
        (v.nrows(), v.ncols())
    }

    pub fn nrows(&self) -> usize {
        self.shape().0
    }

    pub fn ncols(&self) -> usize {
        self.shape().1
    }

    /// Value of a 1×1 tensor.
    pub fn item(&self) -> f64 {
        let v = self.value();
        assert_eq!(v.shape(), (1, 1), "item() needs a scalar tensor");
        v[(0, 0)]
    }

    /// Gradient stored by the last backward pass (trainable leaves only).
    pub fn grad(&self) -> Option<Mat> {
        self.g.nodes.borrow()[self.id].grad.clone()
    }

    pub fn requires_grad(&self) -> bool {
        self.g.needs(self.id)
    }

    /// Copies the value into a new constant leaf, cutting the gradient path.
    pub fn detach(self) -> Tensor<'g> {
        self.g.constant(self.value().as_ref().clone())
    }

    fn unary(self, value: Mat, op: Op) -> Tensor<'g> {
        let needs = self.requires_grad();
        self.g.push(value, op, needs)
    }

    fn binary(self, other: Tensor<'g>, value: Mat, op: Op) -> Tensor<'g> {
        assert!(
            std::ptr::eq(self.g, other.g),
            "tensors belong to different graphs"
        );
        let needs = self.requires_grad() || other.requires_grad();
        self.g.push(value, op, needs)
    }

    fn map(self, f: impl Fn(f64) -> f64, op: Op) -> Tensor<'g> {
        let v = self.value().map(f);
        self.unary(v, op)
    }

    pub fn add(self, o: Tensor<'g>) -> Tensor<'g> {
        let v = broadcast_zip(&self.value(), &o.value(), |x, y| x + y);
        self.binary(o, v, Op::Add(self.id, o.id))
    }

    pub fn sub(self, o: Tensor<'g>) -> Tensor<'g> {
        let v = broadcast_zip(&self.value(), &o.value(), |x, y| x - y);
        self.binary(o, v, Op::Sub(self.id, o.id))
    }

    pub fn mul(self, o: Tensor<'g>) -> Tensor<'g> {
        let v = broadcast_zip(&self.value(), &o.value(), |x, y| x * y);
        self.binary(o, v, Op::Mul(self.id, o.id))
    }

    pub fn div(self, o: Tensor<'g>) -> Tensor<'g> {
        let v = broadcast_zip(&self.value(), &o.value(), |x, y| x / y);
        self.binary(o, v, Op::Div(self.id, o.id))
    }

    pub fn matmul(self, o: Tensor<'g>) -> Tensor<'g> {
        let (a, b) = (self.value(), o.value());
        assert_eq!(a.ncols(), b.nrows(), "matmul inner dimensions differ");
        let v = a.as_ref() * b.as_ref();
        self.binary(o, v, Op::MatMul(self.id, o.id))
    }

    pub fn t(self) -> Tensor<'g> {
        let v = self.value().transpose();
        self.unary(v, Op::Transpose(self.id))
    }

    pub fn exp(self) -> Tensor<'g> {
        self.map(f64::exp, Op::Exp(self.id))
    }

    pub fn ln(self) -> Tensor<'g> {
        self.map(f64::ln, Op::Ln(self.id))
    }

    pub fn tanh(self) -> Tensor<'g> {
        self.map(f64::tanh, Op::Tanh(self.id))
    }

    pub fn relu(self) -> Tensor<'g> {
        self.map(|x| x.max(0.0), Op::Relu(self.id))
    }

    pub fn sigmoid(self) -> Tensor<'g> {
        self.map(|x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(self.id))
    }

    pub fn square(self) -> Tensor<'g> {
        self.map(|x| x * x, Op::Square(self.id))
    }

    pub fn sqrt(self) -> Tensor<'g> {
        self.map(f64::sqrt, Op::Sqrt(self.id))
    }

    pub fn scale(self, s: f64) -> Tensor<'g> {
        self.map(|x| x * s, Op::Scale(self.id, s))
    }

    pub fn add_scalar(self, s: f64) -> Tensor<'g> {
        self.map(|x| x + s, Op::AddScalar(self.id))
    }

    pub fn neg(self) -> Tensor<'g> {
        self.scale(-1.0)
    }

    /// Sum of all entries, 1×1.
    pub fn sum(self) -> Tensor<'g> {
        let v = Mat::from_element(1, 1, self.value().sum());
        self.unary(v, Op::Sum(self.id))
    }

    pub fn mean(self) -> Tensor<'g> {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// Sum across columns: r×c → r×1.
    pub fn row_sums(self) -> Tensor<'g> {
        let v = col_sums_of(&self.value());
        self.unary(v, Op::RowSums(self.id))
    }

    /// Sum across rows: r×c → 1×c.
    pub fn col_sums(self) -> Tensor<'g> {
        let v = row_sums_of(&self.value());
        self.unary(v, Op::ColSums(self.id))
    }

    pub fn row_means(self) -> Tensor<'g> {
        let c = self.ncols() as f64;
        self.row_sums().scale(1.0 / c)
    }

    pub fn col_means(self) -> Tensor<'g> {
        let r = self.nrows() as f64;
        self.col_sums().scale(1.0 / r)
    }

    pub fn slice_rows(self, start: usize, len: usize) -> Tensor<'g> {
        let v = self.value().rows(start, len).into_owned();
        self.unary(v, Op::SliceRows(self.id, start))
    }

    pub fn slice_cols(self, start: usize, len: usize) -> Tensor<'g> {
        let v = self.value().columns(start, len).into_owned();
        self.unary(v, Op::SliceCols(self.id, start))
    }

    /// Rows `idx[i]` of self, in order; indices may repeat.
    pub fn gather_rows(self, idx: Vec<usize>) -> Tensor<'g> {
        let src = self.value();
        let mut v = Mat::zeros(idx.len(), src.ncols());
        for (i, &s) in idx.iter().enumerate() {
            v.row_mut(i).copy_from(&src.row(s));
        }
        self.unary(v, Op::Gather(self.id, Rc::new(idx)))
    }

    /// Each row repeated `k` times consecutively.
    pub fn repeat_rows(self, k: usize) -> Tensor<'g> {
        let idx = (0..self.nrows())
            .flat_map(|i| std::iter::repeat_n(i, k))
            .collect();
        self.gather_rows(idx)
    }

    /// Row-major reshape.
    pub fn reshape(self, r: usize, c: usize) -> Tensor<'g> {
        let v = reshape_row_major(&self.value(), r, c);
        self.unary(v, Op::Reshape(self.id))
    }

    pub fn clamp_min(self, lo: f64) -> Tensor<'g> {
        self.map(|x| x.max(lo), Op::ClampMin(self.id, lo))
    }

    /// For a batch of `n·k` rows laid out as n groups of k, returns the n×k²
    /// matrix of within-group squared distances divided by d.
    pub fn group_pair_sq_dists(self, k: usize) -> Tensor<'g> {
        assert!(
            k >= 1 && self.nrows() % k == 0,
            "rows must split into groups of {k}"
        );
        let v = group_pair_dist(&self.value(), k);
        self.unary(v, Op::GroupPairDist(self.id, k))
    }

    /// N×K matrix of ‖a_i − b_j‖²/d built from the three-term expansion.
    pub fn pairwise_sq_dists(self, o: Tensor<'g>) -> Tensor<'g> {
        assert_eq!(self.ncols(), o.ncols(), "sample dimensions differ");
        let d = self.ncols() as f64;
        let sa = self.square().row_sums();
        let sb = o.square().row_sums().t();
        let cross = self.matmul(o.t()).scale(2.0);
        sa.add(sb).sub(cross).scale(1.0 / d).clamp_min(0.0)
    }

    /// Σ σ_k, with gradient U·Vᵀ.
    pub fn nuclear_norm(self) -> Result<Tensor<'g>> {
        let m = self.value();
        let s = svd(&m)?;
        warn_on_ties(&s.s);
        let total = s.s.iter().sum::<f64>();
        let uvt = &s.u * s.v.transpose();
        Ok(self.unary(
            Mat::from_element(1, 1, total),
            Op::Nuclear(self.id, Rc::new(uvt)),
        ))
    }

    /// σ₁, with gradient u₁v₁ᵀ.
    pub fn spectral_norm(self) -> Result<Tensor<'g>> {
        let m = self.value();
        let s = svd(&m)?;
        if s.s.len() > 1 && s.s[0] - s.s[1] < 1e-8 * s.s[0] {
            log::warn!("top singular value is not isolated; using a subgradient");
        }
        let uvt = s.u.column(0) * s.v.column(0).transpose();
        Ok(self.unary(
            Mat::from_element(1, 1, s.s[0]),
            Op::Spectral(self.id, Rc::new(uvt)),
        ))
    }

    /// Σ σ_k / σ₁.
    pub fn normalized_singular_sum(self) -> Result<Tensor<'g>> {
        if self.value().iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidArgument(
                "normalized singular sum of a zero matrix".into(),
            ));
        }
        let nuc = self.nuclear_norm()?;
        let top = self.spectral_norm()?;
        Ok(nuc.div(top))
    }

    /// Concatenates along columns (all parts share the row count).
    pub fn concat_cols(parts: &[Tensor<'g>]) -> Tensor<'g> {
        assert!(!parts.is_empty());
        let g = parts[0].g;
        let r = parts[0].nrows();
        let c: usize = parts.iter().map(|p| p.ncols()).sum();
        let mut v = Mat::zeros(r, c);
        let mut off = 0;
        for p in parts {
            let pv = p.value();
            assert_eq!(pv.nrows(), r, "concat_cols needs equal row counts");
            v.columns_mut(off, pv.ncols()).copy_from(pv.as_ref());
            off += pv.ncols();
        }
        let needs = parts.iter().any(|p| p.requires_grad());
        g.push(
            v,
            Op::ConcatCols(parts.iter().map(|p| p.id).collect()),
            needs,
        )
    }

    /// Concatenates along rows (all parts share the column count).
    pub fn concat_rows(parts: &[Tensor<'g>]) -> Tensor<'g> {
        assert!(!parts.is_empty());
        let g = parts[0].g;
        let c = parts[0].ncols();
        let r: usize = parts.iter().map(|p| p.nrows()).sum();
        let mut v = Mat::zeros(r, c);
        let mut off = 0;
        for p in parts {
            let pv = p.value();
            assert_eq!(pv.ncols(), c, "concat_rows needs equal column counts");
            v.rows_mut(off, pv.nrows()).copy_from(pv.as_ref());
            off += pv.nrows();
        }
        let needs = parts.iter().any(|p| p.requires_grad());
        g.push(
            v,
            Op::ConcatRows(parts.iter().map(|p| p.id).collect()),
            needs,
        )
    }
}

fn warn_on_ties(s: &[f64]) {
    if s.is_empty() || s[0] == 0.0 {
        return;
    }
    let tol = 1e-8 * s[0];
    if s.windows(2).any(|w| w[0] - w[1] < tol && w[1] > tol) {
        log::warn!("near-degenerate singular values; nuclear-norm gradient is a subgradient");
    }
}

macro_rules! bin_op {
    ($tr:ident, $m:ident) => {
        impl<'g> std::ops::$tr for Tensor<'g> {
            type Output = Tensor<'g>;
            fn $m(self, o: Tensor<'g>) -> Tensor<'g> {
                Tensor::$m(self, o)
            }
        }
    };
}
bin_op!(Add, add);
bin_op!(Sub, sub);
bin_op!(Mul, mul);
bin_op!(Div, div);

impl<'g> std::ops::Neg for Tensor<'g> {
    type Output = Tensor<'g>;
    fn neg(self) -> Tensor<'g> {
        self.scale(-1.0)
    }
}
