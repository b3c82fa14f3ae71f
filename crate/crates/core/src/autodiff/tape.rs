use super::tensor::{matmul_at_into, matmul_bt_into, matmul_into};
use super::{AutodiffError, Tensor};
use crate::scalar::{lit, Real};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug)]
enum Unary {
    Relu,
    Tanh,
    Sigmoid,
    Exp,
    Softplus,
    Square,
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    /// Elementwise, or `(1, c)` right operand broadcast over rows.
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, T),
    Offset(Var),
    Pointwise(Var, Unary),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    SliceCols(Var, usize),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    ExpandCols(Var),
    Reshape(Var),
    Transpose(Var),
    RepeatRows(Var, usize),
    GroupSumRows(Var, usize),
}

struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
    /// Depends on at least one non-constant leaf.
    grad: bool,
}

impl<T> Op<T> {
    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => Vec::new(),
            &Op::MatMul(a, b)
            | &Op::Add(a, b)
            | &Op::Sub(a, b)
            | &Op::Mul(a, b)
            | &Op::Div(a, b) => vec![a, b],
            Op::ConcatCols(parts) => parts.clone(),
            &Op::Scale(a, _)
            | &Op::Offset(a)
            | &Op::Pointwise(a, _)
            | &Op::SoftmaxRows(a)
            | &Op::SliceCols(a, _)
            | &Op::Sum(a)
            | &Op::Mean(a)
            | &Op::SumCols(a)
            | &Op::ExpandCols(a)
            | &Op::Reshape(a)
            | &Op::Transpose(a)
            | &Op::RepeatRows(a, _)
            | &Op::GroupSumRows(a, _) => vec![a],
        }
    }
}

/// Records operations for one forward pass.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

type OpResult = Result<Var, AutodiffError>;

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    /// A differentiable input or parameter.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// An input that never needs a gradient; backward skips everything that
    /// depends on constants only.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>, name: &'static str) -> OpResult {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite(name));
        }
        let grad = op.parents().iter().any(|p| self.nodes[p.0].grad);
        self.nodes.push(Node { op, value, grad });
        Ok(Var(self.nodes.len() - 1))
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> AutodiffError {
        AutodiffError::Shape {
            op,
            lhs: self.shape(a),
            rhs: self.shape(b),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> OpResult {
        let ((m, k), (k2, n)) = (self.shape(a), self.shape(b));
        if k != k2 {
            return Err(self.mismatch("matmul", a, b));
        }
        let mut out = Tensor::zeros(m, n);
        matmul_into(
            self.value(a).data(),
            self.value(b).data(),
            out.data_mut(),
            m,
            k,
            n,
        );
        self.push(Op::MatMul(a, b), out, "matmul")
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        broadcast: bool,
        f: impl Fn(T, T) -> T,
    ) -> Result<Tensor<T>, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (va, vb) = (self.value(a), self.value(b));
        if sa == sb {
            let data = va
                .data()
                .iter()
                .zip(vb.data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Ok(Tensor::from_vec(sa.0, sa.1, data))
        } else if broadcast && sb.0 == 1 && sb.1 == sa.1 {
            let bias = vb.data();
            let mut data = Vec::with_capacity(sa.0 * sa.1);
            for row in va.data().chunks(sa.1) {
                data.extend(row.iter().zip(bias).map(|(&x, &y)| f(x, y)));
            }
            Ok(Tensor::from_vec(sa.0, sa.1, data))
        } else {
            Err(self.mismatch(name, a, b))
        }
    }

    /// Elementwise sum; a `(1, cols)` right operand is broadcast over rows.
    pub fn add(&mut self, a: Var, b: Var) -> OpResult {
        let out = self.binary(a, b, "add", true, |x, y| x + y)?;
        self.push(Op::Add(a, b), out, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> OpResult {
        let out = self.binary(a, b, "sub", false, |x, y| x - y)?;
        self.push(Op::Sub(a, b), out, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> OpResult {
        let out = self.binary(a, b, "mul", false, |x, y| x * y)?;
        self.push(Op::Mul(a, b), out, "mul")
    }

    pub fn div(&mut self, a: Var, b: Var) -> OpResult {
        let out = self.binary(a, b, "div", false, |x, y| x / y)?;
        self.push(Op::Div(a, b), out, "div")
    }

    pub fn scale(&mut self, a: Var, s: T) -> OpResult {
        let out = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), out, "scale")
    }

    /// Adds a constant to every element.
    pub fn offset(&mut self, a: Var, c: T) -> OpResult {
        let out = self.value(a).map(|x| x + c);
        self.push(Op::Offset(a), out, "offset")
    }

    fn pointwise(&mut self, a: Var, u: Unary, name: &'static str) -> OpResult {
        let f: fn(T) -> T = match u {
            Unary::Relu => |x| x.max(T::zero()),
            Unary::Tanh => |x| x.tanh(),
            Unary::Sigmoid => sigmoid,
            Unary::Exp => |x| x.exp(),
            Unary::Softplus => softplus,
            Unary::Square => |x| x * x,
        };
        let out = self.value(a).map(f);
        self.push(Op::Pointwise(a, u), out, name)
    }

    pub fn relu(&mut self, a: Var) -> OpResult {
        self.pointwise(a, Unary::Relu, "relu")
    }

    pub fn tanh(&mut self, a: Var) -> OpResult {
        self.pointwise(a, Unary::Tanh, "tanh")
    }

    pub fn sigmoid(&mut self, a: Var) -> OpResult {
        self.pointwise(a, Unary::Sigmoid, "sigmoid")
    }

    pub fn exp(&mut self, a: Var) -> OpResult {
        self.pointwise(a, Unary::Exp, "exp")
    }

    pub fn softplus(&mut self, a: Var) -> OpResult {
        self.pointwise(a, Unary::Softplus, "softplus")
    }

    pub fn square(&mut self, a: Var) -> OpResult {
        self.pointwise(a, Unary::Square, "square")
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> OpResult {
        let v = self.value(a);
        let (r, c) = v.shape();
        let mut out = Vec::with_capacity(r * c);
        for row in v.data().chunks(c.max(1)) {
            let m = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
            let e: Vec<T> = row.iter().map(|&x| (x - m).exp()).collect();
            let s: T = e.iter().copied().sum();
            out.extend(e.into_iter().map(|x| x / s));
        }
        self.push(
            Op::SoftmaxRows(a),
            Tensor::from_vec(r, c, out),
            "softmax_rows",
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> OpResult {
        let rows = self.shape(parts[0]).0;
        if let Some(&bad) = parts.iter().find(|&&p| self.shape(p).0 != rows) {
            return Err(self.mismatch("concat_cols", parts[0], bad));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        self.push(
            Op::ConcatCols(parts.to_vec()),
            Tensor::from_vec(rows, cols, data),
            "concat_cols",
        )
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> OpResult {
        let (r, c) = self.shape(a);
        if start >= end || end > c {
            return Err(AutodiffError::Invalid {
                op: "slice_cols",
                msg: format!("range {start}..{end} out of {c} columns"),
            });
        }
        let v = self.value(a);
        let mut data = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            data.extend_from_slice(&v.row(i)[start..end]);
        }
        self.push(
            Op::SliceCols(a, start),
            Tensor::from_vec(r, end - start, data),
            "slice_cols",
        )
    }

    pub fn sum(&mut self, a: Var) -> OpResult {
        let s: T = self.value(a).data().iter().copied().sum();
        self.push(Op::Sum(a), Tensor::scalar(s), "sum")
    }

    pub fn mean(&mut self, a: Var) -> OpResult {
        let v = self.value(a);
        let s: T = v.data().iter().copied().sum::<T>() / lit(v.len() as f64);
        self.push(Op::Mean(a), Tensor::scalar(s), "mean")
    }

    /// Row sums, `(r, c) -> (r, 1)`.
    pub fn sum_cols(&mut self, a: Var) -> OpResult {
        let v = self.value(a);
        let (r, c) = v.shape();
        let data = v
            .data()
            .chunks(c.max(1))
            .map(|row| row.iter().copied().sum())
            .collect();
        self.push(Op::SumCols(a), Tensor::from_vec(r, 1, data), "sum_cols")
    }

    /// Repeats a single column, `(r, 1) -> (r, cols)`.
    pub fn expand_cols(&mut self, a: Var, cols: usize) -> OpResult {
        let (r, c) = self.shape(a);
        if c != 1 {
            return Err(AutodiffError::Invalid {
                op: "expand_cols",
                msg: format!("expects one column, got {c}"),
            });
        }
        let mut data = Vec::with_capacity(r * cols);
        for &x in self.value(a).data() {
            data.extend(std::iter::repeat_n(x, cols));
        }
        self.push(
            Op::ExpandCols(a),
            Tensor::from_vec(r, cols, data),
            "expand_cols",
        )
    }

    /// Reinterprets the row-major data with a new shape.
    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> OpResult {
        let v = self.value(a);
        if v.len() != rows * cols {
            return Err(AutodiffError::Shape {
                op: "reshape",
                lhs: v.shape(),
                rhs: (rows, cols),
            });
        }
        let out = Tensor::from_vec(rows, cols, v.data().to_vec());
        self.push(Op::Reshape(a), out, "reshape")
    }

    pub fn transpose(&mut self, a: Var) -> OpResult {
        let v = self.value(a);
        let (r, c) = v.shape();
        let out = Tensor::from_fn(c, r, |i, j| v.get(j, i));
        self.push(Op::Transpose(a), out, "transpose")
    }

    /// Each row repeated `k` times consecutively, `(r, c) -> (r k, c)`.
    pub fn repeat_rows(&mut self, a: Var, k: usize) -> OpResult {
        let v = self.value(a);
        let (r, c) = v.shape();
        let mut data = Vec::with_capacity(r * k * c);
        for i in 0..r {
            for _ in 0..k {
                data.extend_from_slice(v.row(i));
            }
        }
        self.push(
            Op::RepeatRows(a, k),
            Tensor::from_vec(r * k, c, data),
            "repeat_rows",
        )
    }

    /// Sums consecutive groups of `k` rows, `(r k, c) -> (r, c)`.
    pub fn group_sum_rows(&mut self, a: Var, k: usize) -> OpResult {
        let v = self.value(a);
        let (rk, c) = v.shape();
        if k == 0 || rk % k != 0 {
            return Err(AutodiffError::Invalid {
                op: "group_sum_rows",
                msg: format!("{rk} rows not divisible into groups of {k}"),
            });
        }
        let r = rk / k;
        let mut out = Tensor::zeros(r, c);
        for i in 0..rk {
            let g = i / k;
            for (d, &s) in out.data_mut()[g * c..(g + 1) * c].iter_mut().zip(v.row(i)) {
                *d += s;
            }
        }
        self.push(Op::GroupSumRows(a, k), out, "group_sum_rows")
    }

    /// Reverse accumulation from a `1 x 1` loss. Adjoints are kept for leaves
    /// only; intermediate ones are released once propagated.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>, AutodiffError> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(AutodiffError::NonScalarLoss(shape));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if matches!(self.nodes[idx].op, Op::Leaf) {
                grads[idx] = Some(g);
            } else {
                self.propagate(idx, &g, &mut grads);
            }
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn propagate(&self, idx: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let node = &self.nodes[idx];
        let y = &node.value;
        let want = |v: Var| self.nodes[v.0].grad;
        let mut acc = |v: Var, t: Tensor<T>| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        let parents = node.op.parents();
        if parents.iter().all(|&p| !want(p)) {
            return;
        }
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                let ((m, k), n) = (va.shape(), vb.cols());
                if want(a) {
                    let mut ga = Tensor::zeros(m, k);
                    matmul_bt_into(g.data(), vb.data(), ga.data_mut(), m, n, k);
                    acc(a, ga);
                }
                if want(b) {
                    let mut gb = Tensor::zeros(k, n);
                    matmul_at_into(va.data(), g.data(), gb.data_mut(), m, k, n);
                    acc(b, gb);
                }
            }
            &Op::Add(a, b) => {
                if want(a) {
                    acc(a, g.clone());
                }
                if want(b) {
                    acc(b, self.reduce_broadcast(g, self.shape(b)));
                }
            }
            &Op::Sub(a, b) => {
                if want(a) {
                    acc(a, g.clone());
                }
                if want(b) {
                    acc(b, g.map(|x| -x));
                }
            }
            &Op::Mul(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                if want(a) {
                    acc(a, zip(g, vb, |gi, bi| gi * bi));
                }
                if want(b) {
                    acc(b, zip(g, va, |gi, ai| gi * ai));
                }
            }
            &Op::Div(a, b) => {
                let vb = self.value(b);
                if want(a) {
                    acc(a, zip(g, vb, |gi, bi| gi / bi));
                }
                if !want(b) {
                    return;
                }
                let gb = Tensor::from_vec(
                    y.rows(),
                    y.cols(),
                    g.data()
                        .iter()
                        .zip(y.data())
                        .zip(vb.data())
                        .map(|((&gi, &yi), &bi)| -gi * yi / bi)
                        .collect(),
                );
                acc(b, gb);
            }
            &Op::Scale(a, s) => acc(a, g.map(|x| x * s)),
            &Op::Offset(a) => acc(a, g.clone()),
            &Op::Pointwise(a, u) => {
                let x = self.value(a);
                let d = match u {
                    Unary::Relu => zip(g, x, |gi, xi| if xi > T::zero() { gi } else { T::zero() }),
                    Unary::Tanh => zip(g, y, |gi, yi| gi * (T::one() - yi * yi)),
                    Unary::Sigmoid => zip(g, y, |gi, yi| gi * yi * (T::one() - yi)),
                    Unary::Exp => zip(g, y, |gi, yi| gi * yi),
                    Unary::Softplus => zip(g, x, |gi, xi| gi * sigmoid(xi)),
                    Unary::Square => zip(g, x, |gi, xi| gi * (xi + xi)),
                };
                acc(a, d);
            }
            &Op::SoftmaxRows(a) => {
                let c = y.cols();
                let mut d = Vec::with_capacity(y.len());
                for (gr, yr) in g.data().chunks(c).zip(y.data().chunks(c)) {
                    let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    d.extend(gr.iter().zip(yr).map(|(&gi, &yi)| yi * (gi - dot)));
                }
                acc(a, Tensor::from_vec(y.rows(), c, d));
            }
            Op::ConcatCols(parts) => {
                let mut start = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    if want(p) {
                        let mut part = Vec::with_capacity(g.rows() * w);
                        for i in 0..g.rows() {
                            part.extend_from_slice(&g.row(i)[start..start + w]);
                        }
                        acc(p, Tensor::from_vec(g.rows(), w, part));
                    }
                    start += w;
                }
            }
            &Op::SliceCols(a, start) => {
                let (r, c) = self.shape(a);
                let w = y.cols();
                let mut d = Tensor::zeros(r, c);
                for i in 0..r {
                    d.data_mut()[i * c + start..i * c + start + w].copy_from_slice(g.row(i));
                }
                acc(a, d);
            }
            &Op::Sum(a) => {
                let (r, c) = self.shape(a);
                acc(a, Tensor::filled(r, c, g.get(0, 0)));
            }
            &Op::Mean(a) => {
                let (r, c) = self.shape(a);
                acc(a, Tensor::filled(r, c, g.get(0, 0) / lit((r * c) as f64)));
            }
            &Op::SumCols(a) => {
                let (r, c) = self.shape(a);
                let mut d = Vec::with_capacity(r * c);
                for &gi in g.data() {
                    d.extend(std::iter::repeat_n(gi, c));
                }
                acc(a, Tensor::from_vec(r, c, d));
            }
            &Op::ExpandCols(a) => {
                let c = y.cols();
                let data = g
                    .data()
                    .chunks(c)
                    .map(|row| row.iter().copied().sum())
                    .collect();
                acc(a, Tensor::from_vec(y.rows(), 1, data));
            }
            &Op::Reshape(a) => {
                let (r, c) = self.shape(a);
                acc(a, Tensor::from_vec(r, c, g.data().to_vec()));
            }
            &Op::Transpose(a) => {
                let (r, c) = self.shape(a);
                acc(a, Tensor::from_fn(r, c, |i, j| g.get(j, i)));
            }
            &Op::RepeatRows(a, k) => {
                let (r, c) = self.shape(a);
                let mut d = Tensor::zeros(r, c);
                for i in 0..r * k {
                    let src = g.row(i);
                    for (o, &s) in d.data_mut()[(i / k) * c..(i / k + 1) * c]
                        .iter_mut()
                        .zip(src)
                    {
                        *o += s;
                    }
                }
                acc(a, d);
            }
            &Op::GroupSumRows(a, k) => {
                let (rk, c) = self.shape(a);
                let mut d = Vec::with_capacity(rk * c);
                for i in 0..rk {
                    d.extend_from_slice(g.row(i / k));
                }
                acc(a, Tensor::from_vec(rk, c, d));
            }
        }
    }

    fn reduce_broadcast(&self, g: &Tensor<T>, target: (usize, usize)) -> Tensor<T> {
        if g.shape() == target {
            return g.clone();
        }
        let mut out = Tensor::zeros(1, target.1);
        for row in g.data().chunks(target.1) {
            for (o, &v) in out.data_mut().iter_mut().zip(row) {
                *o += v;
            }
        }
        out
    }
}

fn zip<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::from_vec(a.rows(), a.cols(), data)
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
    shapes: Vec<(usize, usize)>,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to leaf `v`; zeros if `v` does not
    /// reach the loss, is a constant, or is an intermediate node.
    pub fn get(&self, v: Var) -> Tensor<T> {
        self.grads[v.0].clone().unwrap_or_else(|| {
            let (r, c) = self.shapes[v.0];
            Tensor::zeros(r, c)
        })
    }
}
