//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records every operation applied to its [`Var`] handles in
//! creation order, which is already a topological order, so the backward
//! pass is a single reverse sweep. Every value is a 2-D row-major matrix;
//! scalars are `1x1` and a batch of vectors is one row per sample.
//!
//! Elementwise binary operations broadcast: along each axis the two extents
//! must be equal, or one of them must be `1`.

use std::cell::{Ref, RefCell};

use ndarray::{concatenate, s, Array2, ArrayView2, Axis, Zip};

use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
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
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Exp(Var),
    Log(Var),
    LogClamped(Var, f64),
    Tanh(Var),
    Relu(Var),
    Sqrt(Var),
    Square(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Sum(Var),
    Mean(Var),
    RowSums(Var),
    ColSums(Var),
    SquaredNorm(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize, usize),
    Transpose(Var),
}

struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

/// Recording of one forward computation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Result of a backward pass: one optional gradient per recorded node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array2<f64>>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, or `None` when `v` is off the
    /// differentiation path.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Like [`Gradients::get`], but tensors off the path report zeros.
    pub fn get_or_zeros(&self, v: Var) -> Array2<f64> {
        match self.get(v) {
            Some(g) => g.clone(),
            None => Array2::zeros(self.shapes[v.0]),
        }
    }
}

fn dims(a: &Array2<f64>) -> Vec<usize> {
    a.shape().to_vec()
}

fn broadcast_shape(op: &'static str, a: &Array2<f64>, b: &Array2<f64>) -> Result<(usize, usize)> {
    let axis = |x: usize, y: usize| -> Option<usize> {
        if x == y {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else if y == 1 {
            Some(x)
        } else {
            None
        }
    };
    match (axis(a.nrows(), b.nrows()), axis(a.ncols(), b.ncols())) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::Shape {
            op,
            left: dims(a),
            right: dims(b),
        }),
    }
}

fn zip_broadcast(
    a: &Array2<f64>,
    b: &Array2<f64>,
    shape: (usize, usize),
    f: impl Fn(f64, f64) -> f64,
) -> Array2<f64> {
    let av = a.broadcast(shape).expect("shape checked");
    let bv = b.broadcast(shape).expect("shape checked");
    let mut out = Array2::zeros(shape);
    Zip::from(&mut out)
        .and(&av)
        .and(&bv)
        .for_each(|o, &x, &y| *o = f(x, y));
    out
}

/// Sum a broadcast gradient back down to `shape`.
fn reduce_to(grad: Array2<f64>, shape: (usize, usize)) -> Array2<f64> {
    let mut g = grad;
    if shape.0 == 1 && g.nrows() != 1 {
        g = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    }
    if shape.1 == 1 && g.ncols() != 1 {
        g = g.sum_axis(Axis(1)).insert_axis(Axis(1));
    }
    g
}

fn row_softmax(a: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let total = row.sum();
        row.mapv_inplace(|x| x / total);
    }
    out
}

fn row_log_softmax(a: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        let lse = max + row.fold(0.0, |acc, &x| acc + (x - max).exp()).ln();
        row.mapv_inplace(|x| x - lse);
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Array2<f64>, op: Op, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn tracked(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|v| nodes[v.0].requires_grad)
    }

    /// Record a leaf. Leaves with `requires_grad` receive gradients.
    pub fn leaf(&self, value: Array2<f64>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&self, value: Array2<f64>) -> Var {
        self.leaf(value, false)
    }

    pub fn variable(&self, value: Array2<f64>) -> Var {
        self.leaf(value, true)
    }

    pub fn scalar(&self, x: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), x))
    }

    pub fn value(&self, v: Var) -> Ref<'_, Array2<f64>> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).dim()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    /// Scalar value of a `1x1` node.
    pub fn item(&self, v: Var) -> f64 {
        let value = self.value(v);
        debug_assert_eq!(value.dim(), (1, 1));
        value[[0, 0]]
    }

    /// A copy of `v`'s value as a fresh constant; gradients stop here.
    pub fn detach(&self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    fn unary(&self, a: Var, op: Op, f: impl FnOnce(&Array2<f64>) -> Array2<f64>) -> Var {
        let value = f(&self.value(a));
        let rg = self.tracked(&[a]);
        self.push(value, op, rg)
    }

    fn binary(
        &self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let value = {
            let av = self.value(a);
            let bv = self.value(b);
            let shape = broadcast_shape(name, &av, &bv)?;
            zip_broadcast(&av, &bv, shape, f)
        };
        let rg = self.tracked(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let av = self.value(a);
            let bv = self.value(b);
            if av.ncols() != bv.nrows() {
                return Err(Error::Shape {
                    op: "matmul",
                    left: dims(&av),
                    right: dims(&bv),
                });
            }
            av.dot(&*bv)
        };
        let rg = self.tracked(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        if self.value(b).iter().any(|&x| x == 0.0) {
            return Err(Error::Domain {
                op: "div",
                detail: "division by zero".into(),
            });
        }
        self.binary("div", a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Scale(a, c), |x| x * c)
    }

    pub fn offset(&self, a: Var, c: f64) -> Var {
        self.unary(a, Op::Offset(a), |x| x + c)
    }

    pub fn neg(&self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn exp(&self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), |x| x.mapv(f64::exp))
    }

    pub fn log(&self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("argument {bad} is not positive"),
            });
        }
        Ok(self.unary(a, Op::Log(a), |x| x.mapv(f64::ln)))
    }

    /// `ln(max(a, floor))`; the gradient is zero where the floor is active.
    pub fn log_clamped(&self, a: Var, floor: f64) -> Result<Var> {
        if !(floor > 0.0) {
            return Err(Error::Domain {
                op: "log_clamped",
                detail: format!("floor {floor} is not positive"),
            });
        }
        Ok(self.unary(a, Op::LogClamped(a, floor), |x| {
            x.mapv(|v| v.max(floor).ln())
        }))
    }

    pub fn tanh(&self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), |x| x.mapv(f64::tanh))
    }

    pub fn relu(&self, a: Var) -> Var {
        // `f64::max` would turn NaN into 0 and hide divergence.
        self.unary(a, Op::Relu(a), |x| x.mapv(|v| if v < 0.0 { 0.0 } else { v }))
    }

    pub fn sqrt(&self, a: Var) -> Result<Var> {
        if let Some(bad) = self.value(a).iter().find(|&&x| !(x >= 0.0)) {
            return Err(Error::Domain {
                op: "sqrt",
                detail: format!("argument {bad} is negative"),
            });
        }
        Ok(self.unary(a, Op::Sqrt(a), |x| x.mapv(f64::sqrt)))
    }

    pub fn square(&self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x.mapv(|v| v * v))
    }

    /// Softmax over the last axis (each row independently).
    pub fn softmax(&self, a: Var) -> Var {
        self.unary(a, Op::Softmax(a), row_softmax)
    }

    pub fn log_softmax(&self, a: Var) -> Var {
        self.unary(a, Op::LogSoftmax(a), row_log_softmax)
    }

    pub fn sum(&self, a: Var) -> Var {
        self.unary(a, Op::Sum(a), |x| Array2::from_elem((1, 1), x.sum()))
    }

    pub fn mean(&self, a: Var) -> Var {
        self.unary(a, Op::Mean(a), |x| {
            Array2::from_elem((1, 1), x.sum() / x.len() as f64)
        })
    }

    /// Per-row sums, shape `(rows, 1)`.
    pub fn row_sums(&self, a: Var) -> Var {
        self.unary(a, Op::RowSums(a), |x| x.sum_axis(Axis(1)).insert_axis(Axis(1)))
    }

    /// Per-column sums, shape `(1, cols)`.
    pub fn col_sums(&self, a: Var) -> Var {
        self.unary(a, Op::ColSums(a), |x| x.sum_axis(Axis(0)).insert_axis(Axis(0)))
    }

    pub fn squared_norm(&self, a: Var) -> Var {
        self.unary(a, Op::SquaredNorm(a), |x| {
            Array2::from_elem((1, 1), x.iter().map(|v| v * v).sum())
        })
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Result<Var> {
        let value = {
            let values: Vec<Ref<'_, Array2<f64>>> = parts.iter().map(|&p| self.value(p)).collect();
            let views: Vec<ArrayView2<'_, f64>> = values.iter().map(|v| v.view()).collect();
            concatenate(Axis(1), &views).map_err(|_| Error::Shape {
                op: "concat_cols",
                left: values.first().map(|v| dims(v)).unwrap_or_default(),
                right: values
                    .iter()
                    .find(|v| v.nrows() != values[0].nrows())
                    .map(|v| dims(v))
                    .unwrap_or_default(),
            })?
        };
        let rg = self.tracked(parts);
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    /// Columns `start..end` of `a`.
    pub fn slice_cols(&self, a: Var, start: usize, end: usize) -> Result<Var> {
        let cols = self.shape(a).1;
        if start > end || end > cols {
            return Err(Error::Shape {
                op: "slice_cols",
                left: self.value(a).shape().to_vec(),
                right: vec![start, end],
            });
        }
        Ok(self.unary(a, Op::SliceCols(a, start, end), |x| {
            x.slice(s![.., start..end]).to_owned()
        }))
    }

    /// Split `a` column-wise into pieces of the given widths.
    pub fn split_cols(&self, a: Var, widths: &[usize]) -> Result<Vec<Var>> {
        let total: usize = widths.iter().sum();
        let cols = self.shape(a).1;
        if total != cols {
            return Err(Error::Shape {
                op: "split_cols",
                left: self.value(a).shape().to_vec(),
                right: widths.to_vec(),
            });
        }
        let mut start = 0;
        let mut out = Vec::with_capacity(widths.len());
        for &w in widths {
            out.push(self.slice_cols(a, start, start + w)?);
            start += w;
        }
        Ok(out)
    }

    pub fn transpose(&self, a: Var) -> Var {
        self.unary(a, Op::Transpose(a), |x| x.t().as_standard_layout().into_owned())
    }

    /// Gradients of the scalar `loss` with respect to every tracked node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if nodes[loss.0].value.dim() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[loss.0].value.shape()
            )));
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        let send = |grads: &mut Vec<Option<Array2<f64>>>, to: Var, g: Array2<f64>| {
            if !nodes[to.0].requires_grad {
                return;
            }
            match &mut grads[to.0] {
                Some(acc) => *acc += &g,
                slot => *slot = Some(g),
            }
        };

        for idx in (0..=loss.0).rev() {
            let node = &nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let out = &node.value;
            let val = |v: Var| &nodes[v.0].value;
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    if nodes[a.0].requires_grad {
                        send(&mut grads, *a, g.dot(&val(*b).t()));
                    }
                    if nodes[b.0].requires_grad {
                        send(&mut grads, *b, val(*a).t().dot(&g));
                    }
                }
                Op::Add(a, b) => {
                    send(&mut grads, *a, reduce_to(g.clone(), val(*a).dim()));
                    send(&mut grads, *b, reduce_to(g, val(*b).dim()));
                }
                Op::Sub(a, b) => {
                    send(&mut grads, *a, reduce_to(g.clone(), val(*a).dim()));
                    send(&mut grads, *b, reduce_to(-g, val(*b).dim()));
                }
                Op::Mul(a, b) => {
                    let shape = out.dim();
                    if nodes[a.0].requires_grad {
                        let ga = zip_broadcast(&g, val(*b), shape, |x, y| x * y);
                        send(&mut grads, *a, reduce_to(ga, val(*a).dim()));
                    }
                    if nodes[b.0].requires_grad {
                        let gb = zip_broadcast(&g, val(*a), shape, |x, y| x * y);
                        send(&mut grads, *b, reduce_to(gb, val(*b).dim()));
                    }
                }
                Op::Div(a, b) => {
                    let shape = out.dim();
                    if nodes[a.0].requires_grad {
                        let ga = zip_broadcast(&g, val(*b), shape, |x, y| x / y);
                        send(&mut grads, *a, reduce_to(ga, val(*a).dim()));
                    }
                    if nodes[b.0].requires_grad {
                        let q = zip_broadcast(out, val(*b), shape, |o, y| -o / y);
                        send(&mut grads, *b, reduce_to(g * q, val(*b).dim()));
                    }
                }
                Op::Scale(a, c) => send(&mut grads, *a, g * *c),
                Op::Offset(a) => send(&mut grads, *a, g),
                Op::Exp(a) => send(&mut grads, *a, g * out),
                Op::Log(a) => send(&mut grads, *a, g / val(*a)),
                Op::LogClamped(a, floor) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(val(*a)).for_each(|gi, &x| {
                        *gi = if x > *floor { *gi / x } else { 0.0 };
                    });
                    send(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(out).for_each(|gi, &y| *gi *= 1.0 - y * y);
                    send(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(val(*a)).for_each(|gi, &x| {
                        if x <= 0.0 {
                            *gi = 0.0;
                        }
                    });
                    send(&mut grads, *a, ga);
                }
                Op::Sqrt(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(out).for_each(|gi, &y| *gi /= 2.0 * y);
                    send(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let mut ga = g;
                    Zip::from(&mut ga).and(val(*a)).for_each(|gi, &x| *gi *= 2.0 * x);
                    send(&mut grads, *a, ga);
                }
                Op::Softmax(a) => {
                    let mut ga = g;
                    for (mut grow, prow) in ga.rows_mut().into_iter().zip(out.rows()) {
                        let dot: f64 = grow.iter().zip(prow.iter()).map(|(x, p)| x * p).sum();
                        Zip::from(&mut grow).and(&prow).for_each(|gi, &p| *gi = p * (*gi - dot));
                    }
                    send(&mut grads, *a, ga);
                }
                Op::LogSoftmax(a) => {
                    let mut ga = g;
                    for (mut grow, lrow) in ga.rows_mut().into_iter().zip(out.rows()) {
                        let total = grow.sum();
                        Zip::from(&mut grow)
                            .and(&lrow)
                            .for_each(|gi, &l| *gi -= l.exp() * total);
                    }
                    send(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let ga = Array2::from_elem(val(*a).dim(), g[[0, 0]]);
                    send(&mut grads, *a, ga);
                }
                Op::Mean(a) => {
                    let n = val(*a).len() as f64;
                    let ga = Array2::from_elem(val(*a).dim(), g[[0, 0]] / n);
                    send(&mut grads, *a, ga);
                }
                Op::RowSums(a) | Op::ColSums(a) => {
                    let ga = g.broadcast(val(*a).dim()).expect("reduced axis").to_owned();
                    send(&mut grads, *a, ga);
                }
                Op::SquaredNorm(a) => {
                    let c = 2.0 * g[[0, 0]];
                    send(&mut grads, *a, val(*a) * c);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = val(*p).ncols();
                        send(&mut grads, *p, g.slice(s![.., start..start + w]).to_owned());
                        start += w;
                    }
                }
                Op::SliceCols(a, start, end) => {
                    let mut ga = Array2::zeros(val(*a).dim());
                    ga.slice_mut(s![.., *start..*end]).assign(&g);
                    send(&mut grads, *a, ga);
                }
                Op::Transpose(a) => send(&mut grads, *a, g.t().as_standard_layout().into_owned()),
            }
        }

        let shapes = nodes.iter().map(|n| n.value.dim()).collect();
        Ok(Gradients { grads, shapes })
    }
}
