//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding the
//! op, its input indices, and the computed value. [`Tape::backward`] then
//! walks the nodes once in reverse, accumulating adjoints. Gradients of a
//! fan-out (a node consumed by several later ops) add up; parameters that do
//! not influence the output get a zero gradient.
//!
//! The graph is dynamic: each batch builds a fresh tape, so no retain/clear
//! bookkeeping exists. All arithmetic delegates to the kernels in
//! [`super::tensor`], which keeps tape evaluation bit-identical to plain
//! kernel evaluation.

use std::cell::RefCell;

use crate::error::{Error, Result};

use super::tensor::{self, sigmoid_scalar, softplus_scalar, Tensor};

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    MatMul(usize, usize),
    AddRow(usize, usize),
    Relu(usize),
    Tanh(usize),
    Exp(usize),
    Ln(usize),
    Softplus(usize),
    Scale(usize, f64),
    AddScalar(usize),
    ClampMin(usize, f64),
    SoftmaxLast(usize),
    Sum(usize),
    Mean(usize),
    Reshape(usize),
    SliceCols(usize, usize, usize),
    SliceAxis1(usize, usize),
    SliceLast(usize, usize),
    OuterRows(usize, usize),
    ConcatCols(Vec<usize>),
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Records a forward pass; owns every intermediate value.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`]. Cheap to copy; all ops are methods here.
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
}

/// Adjoints produced by [`Tape::backward`], indexed by tape node.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the backward root with respect to `v`. Zero-filled if `v`
    /// did not influence the root.
    pub fn wrt(&self, v: Var<'_>) -> Tensor {
        match &self.grads[v.idx] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&v.tape.nodes.borrow()[v.idx].value.shape().to_vec()),
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, op: Op, value: Tensor, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Var {
            tape: self,
            idx: nodes.len() - 1,
        }
    }

    /// Leaf that participates in differentiation.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(Op::Leaf, value, true)
    }

    /// Leaf treated as a constant: no gradient flows into it.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(Op::Leaf, value, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    /// Concatenates 2-D vars along the column axis.
    pub fn concat_cols<'t>(&'t self, parts: &[Var<'t>]) -> Result<Var<'t>> {
        let value = {
            let nodes = self.nodes.borrow();
            let tensors: Vec<&Tensor> = parts.iter().map(|v| &nodes[v.idx].value).collect();
            tensor::concat_cols(&tensors)?
        };
        let rg = {
            let nodes = self.nodes.borrow();
            parts.iter().any(|v| nodes[v.idx].requires_grad)
        };
        Ok(self.push(Op::ConcatCols(parts.iter().map(|v| v.idx).collect()), value, rg))
    }

    /// Runs reverse accumulation from a scalar `root`.
    pub fn backward(&self, root: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if nodes[root.idx].value.len() != 1 {
            return Err(Error::shape(
                "backward",
                "scalar root",
                format!("{:?}", nodes[root.idx].value.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[root.idx] = Some(Tensor::filled(nodes[root.idx].value.shape(), 1.0));

        // Nodes only reference earlier nodes, so one reverse sweep visits
        // every node after all of its consumers.
        for i in (0..nodes.len()).rev() {
            if !nodes[i].requires_grad {
                continue;
            }
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            let add = |grads: &mut Vec<Option<Tensor>>, j: usize, delta: Tensor| {
                if !nodes[j].requires_grad {
                    return;
                }
                match &mut grads[j] {
                    Some(acc) => {
                        for (a, d) in acc.data_mut().iter_mut().zip(delta.data()) {
                            *a += d;
                        }
                    }
                    slot => *slot = Some(delta),
                }
            };
            match &nodes[i].op {
                Op::Leaf => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::Add(a, b) => {
                    add(&mut grads, *a, g.clone());
                    add(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    add(&mut grads, *a, g.clone());
                    add(&mut grads, *b, tensor::map(&g, |x| -x));
                }
                Op::Mul(a, b) => {
                    add(&mut grads, *a, tensor::zip("mul.bwd", &g, &nodes[*b].value, |g, b| g * b)?);
                    add(&mut grads, *b, tensor::zip("mul.bwd", &g, &nodes[*a].value, |g, a| g * a)?);
                }
                Op::Div(a, b) => {
                    let bv = &nodes[*b].value;
                    add(&mut grads, *a, tensor::zip("div.bwd", &g, bv, |g, b| g / b)?);
                    let av = &nodes[*a].value;
                    let mut db = tensor::zip("div.bwd", &g, av, |g, a| -g * a)?;
                    for (d, b) in db.data_mut().iter_mut().zip(bv.data()) {
                        *d /= b * b;
                    }
                    add(&mut grads, *b, db);
                }
                Op::MatMul(a, b) => {
                    add(&mut grads, *a, tensor::matmul_nt(&g, &nodes[*b].value));
                    add(&mut grads, *b, tensor::matmul_tn(&nodes[*a].value, &g));
                }
                Op::AddRow(a, bias) => {
                    let cols = nodes[*bias].value.len();
                    let mut db = vec![0.0; cols];
                    for (k, gv) in g.data().iter().enumerate() {
                        db[k % cols] += gv;
                    }
                    add(&mut grads, *a, g);
                    add(&mut grads, *bias, Tensor::from_slice(&db));
                }
                Op::Relu(a) => {
                    add(
                        &mut grads,
                        *a,
                        tensor::zip("relu.bwd", &g, &nodes[*a].value, |g, x| {
                            if x > 0.0 {
                                g
                            } else {
                                0.0
                            }
                        })?,
                    );
                }
                Op::Tanh(a) => {
                    add(
                        &mut grads,
                        *a,
                        tensor::zip("tanh.bwd", &g, &nodes[i].value, |g, y| g * (1.0 - y * y))?,
                    );
                }
                Op::Exp(a) => {
                    add(
                        &mut grads,
                        *a,
                        tensor::zip("exp.bwd", &g, &nodes[i].value, |g, y| g * y)?,
                    );
                }
                Op::Ln(a) => {
                    add(
                        &mut grads,
                        *a,
                        tensor::zip("ln.bwd", &g, &nodes[*a].value, |g, x| g / x)?,
                    );
                }
                Op::Softplus(a) => {
                    add(
                        &mut grads,
                        *a,
                        tensor::zip("softplus.bwd", &g, &nodes[*a].value, |g, x| {
                            g * sigmoid_scalar(x)
                        })?,
                    );
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    add(&mut grads, *a, tensor::map(&g, |g| g * c));
                }
                Op::AddScalar(a) => {
                    add(&mut grads, *a, g);
                }
                Op::ClampMin(a, c) => {
                    let c = *c;
                    add(
                        &mut grads,
                        *a,
                        tensor::zip("clamp_min.bwd", &g, &nodes[*a].value, |g, x| {
                            if x > c {
                                g
                            } else {
                                0.0
                            }
                        })?,
                    );
                }
                Op::SoftmaxLast(a) => {
                    let y = &nodes[i].value;
                    let n = *y.shape().last().unwrap();
                    let rows = y.len() / n;
                    let mut dx = vec![0.0; y.len()];
                    for r in 0..rows {
                        let ys = &y.data()[r * n..(r + 1) * n];
                        let gs = &g.data()[r * n..(r + 1) * n];
                        let dot: f64 = ys.iter().zip(gs).map(|(&y, &g)| y * g).sum();
                        for k in 0..n {
                            dx[r * n + k] = ys[k] * (gs[k] - dot);
                        }
                    }
                    add(&mut grads, *a, Tensor::new(y.shape().to_vec(), dx)?);
                }
                Op::Sum(a) => {
                    let gv = g.item();
                    add(&mut grads, *a, Tensor::filled(nodes[*a].value.shape(), gv));
                }
                Op::Mean(a) => {
                    let n = nodes[*a].value.len() as f64;
                    let gv = g.item() / n;
                    add(&mut grads, *a, Tensor::filled(nodes[*a].value.shape(), gv));
                }
                Op::Reshape(a) => {
                    add(&mut grads, *a, g.reshape(nodes[*a].value.shape().to_vec())?);
                }
                Op::SliceCols(a, start, end) => {
                    let src = nodes[*a].value.shape();
                    let (r, c) = (src[0], src[1]);
                    let w = end - start;
                    let mut da = Tensor::zeros(src);
                    for row in 0..r {
                        for k in 0..w {
                            da.data_mut()[row * c + start + k] = g.data()[row * w + k];
                        }
                    }
                    add(&mut grads, *a, da);
                }
                Op::SliceAxis1(a, pick) => {
                    let src = nodes[*a].value.shape().to_vec();
                    let d1 = src[1];
                    let inner: usize = src[2..].iter().product();
                    let mut da = Tensor::zeros(&src);
                    for b in 0..src[0] {
                        let base = (b * d1 + pick) * inner;
                        for t in 0..inner {
                            da.data_mut()[base + t] = g.data()[b * inner + t];
                        }
                    }
                    add(&mut grads, *a, da);
                }
                Op::SliceLast(a, pick) => {
                    let src = nodes[*a].value.shape().to_vec();
                    let n = *src.last().unwrap();
                    let mut da = Tensor::zeros(&src);
                    for (r, gv) in g.data().iter().enumerate() {
                        da.data_mut()[r * n + pick] = *gv;
                    }
                    add(&mut grads, *a, da);
                }
                Op::OuterRows(a, b) => {
                    let av = &nodes[*a].value;
                    let bv = &nodes[*b].value;
                    let (bsz, p) = (av.shape()[0], av.shape()[1]);
                    let q = bv.shape()[1];
                    let mut da = Tensor::zeros(av.shape());
                    let mut db = Tensor::zeros(bv.shape());
                    for r in 0..bsz {
                        for ii in 0..p {
                            let mut acc = 0.0;
                            for j in 0..q {
                                let gv = g.data()[(r * p + ii) * q + j];
                                acc += gv * bv.data()[r * q + j];
                                db.data_mut()[r * q + j] += gv * av.data()[r * p + ii];
                            }
                            da.data_mut()[r * p + ii] = acc;
                        }
                    }
                    add(&mut grads, *a, da);
                    add(&mut grads, *b, db);
                }
                Op::ConcatCols(parts) => {
                    let total = nodes[i].value.shape()[1];
                    let rows = nodes[i].value.shape()[0];
                    let mut start = 0;
                    for &p in parts {
                        let c = nodes[p].value.shape()[1];
                        let mut dp = Tensor::zeros(&[rows, c]);
                        for row in 0..rows {
                            for k in 0..c {
                                dp.data_mut()[row * c + k] = g.data()[row * total + start + k];
                            }
                        }
                        add(&mut grads, p, dp);
                        start += c;
                    }
                }
            }
        }
        drop(nodes);
        Ok(Gradients { grads })
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Tensor {
        self.tape.nodes.borrow()[self.idx].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.nodes.borrow()[self.idx].value.shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.tape.nodes.borrow()[self.idx].value.item()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.nodes.borrow()[self.idx].requires_grad
    }

    fn rg2(&self, other: Var<'t>) -> bool {
        let nodes = self.tape.nodes.borrow();
        nodes[self.idx].requires_grad || nodes[other.idx].requires_grad
    }

    fn binary(
        &self,
        other: Var<'t>,
        op: fn(usize, usize) -> Op,
        f: impl FnOnce(&Tensor, &Tensor) -> Result<Tensor>,
    ) -> Result<Var<'t>> {
        let value = {
            let nodes = self.tape.nodes.borrow();
            f(&nodes[self.idx].value, &nodes[other.idx].value)?
        };
        Ok(self
            .tape
            .push(op(self.idx, other.idx), value, self.rg2(other)))
    }

    fn unary(&self, op: Op, f: impl FnOnce(&Tensor) -> Result<Tensor>) -> Result<Var<'t>> {
        let (value, rg) = {
            let nodes = self.tape.nodes.borrow();
            (f(&nodes[self.idx].value)?, nodes[self.idx].requires_grad)
        };
        Ok(self.tape.push(op, value, rg))
    }

    pub fn add(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Add, |a, b| tensor::zip("add", a, b, |x, y| x + y))
    }

    pub fn sub(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Sub, |a, b| tensor::zip("sub", a, b, |x, y| x - y))
    }

    pub fn mul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Mul, |a, b| tensor::zip("mul", a, b, |x, y| x * y))
    }

    pub fn div(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::Div, |a, b| tensor::zip("div", a, b, |x, y| x / y))
    }

    pub fn matmul(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::MatMul, tensor::matmul)
    }

    /// Broadcast-adds a bias row to every row of a 2-D var.
    pub fn add_row(&self, bias: Var<'t>) -> Result<Var<'t>> {
        self.binary(bias, Op::AddRow, tensor::add_row)
    }

    pub fn relu(&self) -> Result<Var<'t>> {
        self.unary(Op::Relu(self.idx), |a| {
            Ok(tensor::map(a, |x| if x > 0.0 { x } else { 0.0 }))
        })
    }

    pub fn tanh(&self) -> Result<Var<'t>> {
        self.unary(Op::Tanh(self.idx), |a| Ok(tensor::map(a, f64::tanh)))
    }

    pub fn exp(&self) -> Result<Var<'t>> {
        self.unary(Op::Exp(self.idx), |a| Ok(tensor::map(a, f64::exp)))
    }

    /// Natural log. Callers guard the domain, usually via [`Var::clamp_min`].
    pub fn ln(&self) -> Result<Var<'t>> {
        self.unary(Op::Ln(self.idx), |a| Ok(tensor::map(a, f64::ln)))
    }

    pub fn softplus(&self) -> Result<Var<'t>> {
        self.unary(Op::Softplus(self.idx), |a| {
            Ok(tensor::map(a, softplus_scalar))
        })
    }

    pub fn scale(&self, c: f64) -> Result<Var<'t>> {
        self.unary(Op::Scale(self.idx, c), |a| Ok(tensor::map(a, |x| x * c)))
    }

    pub fn add_scalar(&self, c: f64) -> Result<Var<'t>> {
        self.unary(Op::AddScalar(self.idx), |a| Ok(tensor::map(a, |x| x + c)))
    }

    /// Elementwise `max(x, c)`. Gradient is zero on the clamped side.
    pub fn clamp_min(&self, c: f64) -> Result<Var<'t>> {
        self.unary(Op::ClampMin(self.idx, c), |a| Ok(tensor::map(a, |x| x.max(c))))
    }

    pub fn softmax_last(&self) -> Result<Var<'t>> {
        self.unary(Op::SoftmaxLast(self.idx), tensor::softmax_last)
    }

    /// Sum of all elements, as a scalar var.
    pub fn sum(&self) -> Result<Var<'t>> {
        self.unary(Op::Sum(self.idx), |a| {
            Ok(Tensor::scalar(a.data().iter().sum()))
        })
    }

    /// Mean of all elements, as a scalar var.
    pub fn mean(&self) -> Result<Var<'t>> {
        self.unary(Op::Mean(self.idx), |a| {
            if a.is_empty() {
                return Err(Error::shape("mean", "non-empty tensor", "0 elements"));
            }
            Ok(Tensor::scalar(a.data().iter().sum::<f64>() / a.len() as f64))
        })
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Var<'t>> {
        self.unary(Op::Reshape(self.idx), |a| a.reshape(shape))
    }

    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Var<'t>> {
        self.unary(Op::SliceCols(self.idx, start, end), |a| {
            tensor::slice_cols(a, start, end)
        })
    }

    /// Picks index `i` on axis 1, dropping that axis.
    pub fn slice_axis1(&self, i: usize) -> Result<Var<'t>> {
        self.unary(Op::SliceAxis1(self.idx, i), |a| tensor::slice_axis1(a, i))
    }

    /// Picks index `k` on the last axis, dropping that axis.
    pub fn slice_last(&self, k: usize) -> Result<Var<'t>> {
        self.unary(Op::SliceLast(self.idx, k), |a| tensor::slice_last(a, k))
    }

    /// Per-row outer product `[B,p] x [B,q] -> [B,p,q]`.
    pub fn outer_rows(&self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, Op::OuterRows, tensor::outer_rows)
    }
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var").field("idx", &self.idx).finish()
    }
}
