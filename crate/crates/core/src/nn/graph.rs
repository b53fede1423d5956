//! A small tape-based reverse-mode differentiator over dense 2-D tensors.
//!
//! Every value on the tape is a `rows × cols` matrix; rows index the batch.
//! Nodes are appended in evaluation order, so a single reverse sweep over the
//! tape visits every node after all of its consumers.
//!
//! Leaves are either trainable ([`Graph::param`]) or constant
//! ([`Graph::constant`]). Nodes that do not depend on a trainable leaf are
//! skipped during the backward sweep, which keeps the cost of evaluating a
//! frozen network (e.g. a critic inside the actor loss) down to the forward
//! pass plus the input-gradient product.

use ndarray::{s, Array2, Axis, Zip};

use crate::error::{Error, Result};

pub type Tensor = Array2<f64>;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulScalar(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Softplus(Var),
    Clamp(Var, f64, f64),
    Min(Var, Var),
    RowSum(Var),
    Mean(Var),
    Sum(Var),
    Concat(Var, Var),
    Columns(Var, usize, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of a scalar node with respect to every node that required one.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Gradient of `var`, or zeros of `shape` when the loss does not depend on it.
    pub fn get_or_zeros(&self, var: Var, shape: (usize, usize)) -> Tensor {
        self.get(var).cloned().unwrap_or_else(|| Tensor::zeros(shape))
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }
}

fn same_shape(ctx: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Graph(format!("{ctx}: shape {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

fn softplus(x: f64) -> f64 {
    // log(1 + e^x) without overflow
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `tanh` through a single `exp`; within a couple of ulps of `f64::tanh`
/// and noticeably cheaper, which matters because hidden layers call it
/// hundreds of thousands of times per update.
#[inline]
pub fn tanh(x: f64) -> f64 {
    if x.abs() > 19.0 {
        return 1f64.copysign(x);
    }
    let e = (2.0 * x).exp();
    (e - 1.0) / (e + 1.0)
}

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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    /// Value of a `1 × 1` node.
    pub fn scalar(&self, var: Var) -> Result<f64> {
        let v = self.value(var);
        if v.dim() != (1, 1) {
            return Err(Error::Graph(format!("expected scalar node, found shape {:?}", v.dim())));
        }
        Ok(v[[0, 0]])
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf; no gradient flows into it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// `x · w` with `x: n×k`, `w: k×m`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.ncols() != wv.nrows() {
            return Err(Error::Graph(format!("matmul: {:?} · {:?}", xv.dim(), wv.dim())));
        }
        let out = xv.dot(wv);
        let rg = self.rg(x) || self.rg(w);
        Ok(self.push(out, Op::MatMul(x, w), rg))
    }

    /// `x + b` where `b` is a `1 × m` row broadcast over the rows of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.nrows() != 1 || bv.ncols() != xv.ncols() {
            return Err(Error::Graph(format!("add_row: {:?} + {:?}", xv.dim(), bv.dim())));
        }
        let out = xv + bv;
        let rg = self.rg(x) || self.rg(b);
        Ok(self.push(out, Op::AddRow(x, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let out = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("sub", self.value(a), self.value(b))?;
        let out = self.value(a) - self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let out = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    /// `x * s` where `s` is a `1 × 1` node.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = self.scalar(s)?;
        let out = self.value(x) * sv;
        let rg = self.rg(x) || self.rg(s);
        Ok(self.push(out, Op::MulScalar(x, s), rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x) * c;
        let rg = self.rg(x);
        self.push(out, Op::Scale(x, c), rg)
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out = self.value(x).mapv(f);
        let rg = self.rg(x);
        self.push(out, op, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x), tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Relu(x), |v| v.max(0.0))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp(x), f64::exp)
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, Op::Log(x), f64::ln)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x), |v| v * v)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, Op::Softplus(x), softplus)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        self.unary(x, Op::Clamp(x, lo, hi), |v| v.clamp(lo, hi))
    }

    /// Elementwise minimum. Ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("min", self.value(a), self.value(b))?;
        let mut out = self.value(a).clone();
        Zip::from(&mut out).and(self.value(b)).for_each(|o, &bv| *o = o.min(bv));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Min(a, b), rg))
    }

    /// Sum across columns: `n × m → n × 1`.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let out = self.value(x).sum_axis(Axis(1)).insert_axis(Axis(1));
        let rg = self.rg(x);
        self.push(out, Op::RowSum(x), rg)
    }

    /// Mean of all entries as a `1 × 1` node.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.is_empty() {
            return Err(Error::Graph("mean of an empty tensor".into()));
        }
        let m = v.sum() / v.len() as f64;
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_elem((1, 1), m), Op::Mean(x), rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).sum();
        let rg = self.rg(x);
        self.push(Tensor::from_elem((1, 1), total), Op::Sum(x), rg)
    }

    /// Column-wise concatenation `[a | b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.nrows() != bv.nrows() {
            return Err(Error::Graph(format!("concat: {:?} | {:?}", av.dim(), bv.dim())));
        }
        let out = ndarray::concatenate(Axis(1), &[av.view(), bv.view()]).map_err(|e| Error::Graph(e.to_string()))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Concat(a, b), rg))
    }

    /// Columns `start..end` of `x`.
    pub fn columns(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let v = self.value(x);
        if start >= end || end > v.ncols() {
            return Err(Error::Graph(format!("columns {start}..{end} of shape {:?}", v.dim())));
        }
        let out = v.slice(s![.., start..end]).to_owned();
        let rg = self.rg(x);
        Ok(self.push(out, Op::Columns(x, start, end), rg))
    }

    /// Reverse sweep from a `1 × 1` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.dim() != (1, 1) {
            return Err(Error::Graph(format!(
                "backward needs a scalar loss, found shape {:?}",
                lv.dim()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::ones((1, 1)));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |v: Var, contrib: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => *existing += &contrib,
                slot => *slot = Some(contrib),
            }
        };
        match node.op {
            Op::Leaf => {}
            Op::MatMul(x, w) => {
                if self.rg(x) {
                    acc(x, g.dot(&self.value(w).t()));
                }
                if self.rg(w) {
                    acc(w, self.value(x).t().dot(g));
                }
            }
            Op::AddRow(x, b) => {
                acc(x, g.clone());
                if self.rg(b) {
                    acc(b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::Add(a, b) => {
                acc(a, g.clone());
                acc(b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(a, g.clone());
                acc(b, -g);
            }
            Op::Mul(a, b) => {
                if self.rg(a) {
                    acc(a, g * self.value(b));
                }
                if self.rg(b) {
                    acc(b, g * self.value(a));
                }
            }
            Op::MulScalar(x, s) => {
                let sv = self.value(s)[[0, 0]];
                if self.rg(x) {
                    acc(x, g * sv);
                }
                if self.rg(s) {
                    let d = (g * self.value(x)).sum();
                    acc(s, Tensor::from_elem((1, 1), d));
                }
            }
            Op::Scale(x, c) => acc(x, g * c),
            Op::Tanh(x) => {
                let mut d = node.value.mapv(|t| 1.0 - t * t);
                d *= g;
                acc(x, d);
            }
            Op::Relu(x) => {
                let mut d = self.value(x).mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                d *= g;
                acc(x, d);
            }
            Op::Exp(x) => acc(x, g * &node.value),
            Op::Log(x) => acc(x, g / self.value(x)),
            Op::Square(x) => acc(x, g * self.value(x) * 2.0),
            Op::Softplus(x) => {
                let mut d = self.value(x).mapv(sigmoid);
                d *= g;
                acc(x, d);
            }
            Op::Clamp(x, lo, hi) => {
                let mut d = self.value(x).mapv(|v| if v >= lo && v <= hi { 1.0 } else { 0.0 });
                d *= g;
                acc(x, d);
            }
            Op::Min(a, b) => {
                let (av, bv) = (self.value(a), self.value(b));
                let mut da = g.clone();
                let mut db = g.clone();
                Zip::from(&mut da)
                    .and(&mut db)
                    .and(av)
                    .and(bv)
                    .for_each(|ga, gb, &x, &y| {
                        if x <= y {
                            *gb = 0.0;
                        } else {
                            *ga = 0.0;
                        }
                    });
                acc(a, da);
                acc(b, db);
            }
            Op::RowSum(x) => {
                let shape = self.value(x).dim();
                let d = g
                    .broadcast(shape)
                    .expect("row-sum gradient broadcasts over columns")
                    .to_owned();
                acc(x, d);
            }
            Op::Mean(x) => {
                let v = self.value(x);
                acc(x, Tensor::from_elem(v.dim(), g[[0, 0]] / v.len() as f64));
            }
            Op::Sum(x) => {
                let v = self.value(x);
                acc(x, Tensor::from_elem(v.dim(), g[[0, 0]]));
            }
            Op::Concat(a, b) => {
                let split = self.value(a).ncols();
                if self.rg(a) {
                    acc(a, g.slice(s![.., ..split]).to_owned());
                }
                if self.rg(b) {
                    acc(b, g.slice(s![.., split..]).to_owned());
                }
            }
            Op::Columns(x, start, end) => {
                let mut d = Tensor::zeros(self.value(x).dim());
                d.slice_mut(s![.., start..end]).assign(g);
                acc(x, d);
            }
        }
    }
}
