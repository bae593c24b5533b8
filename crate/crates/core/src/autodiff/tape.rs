use super::kernels;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Square roots below this value get a zero gradient instead of `1/(2√x)`.
pub const SQRT_GRAD_FLOOR: f64 = 1e-12;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Stride and zero padding of a square-kernel convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    LhsScalar,
    RhsScalar,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Relu(Var),
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Div(Var, Var, Broadcast),
    Scale(Var, f64),
    AddScalar(Var),
    Sum(Var),
    Mean(Var),
    Sqrt(Var),
    Abs(Var),
    MinRows { input: Var, argmin: Vec<usize> },
    AddBias(Var, Var),
    SumRows(Var),
    Slice { input: Var, start: usize },
    Reshape(Var),
    Columns { input: Var, start: usize },
    GatherRows { input: Var, index: Vec<usize> },
    Concat(Var, Var),
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        geom: ConvGeometry,
        cols: Vec<f64>,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::MatMul(..) => "matmul",
            Op::Relu(_) => "relu",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::AddScalar(_) => "add_scalar",
            Op::Sum(_) => "sum",
            Op::Mean(_) => "mean",
            Op::Sqrt(_) => "sqrt",
            Op::Abs(_) => "abs",
            Op::MinRows { .. } => "min_rows",
            Op::AddBias(..) => "add_bias",
            Op::SumRows(_) => "sum_rows",
            Op::Slice { .. } => "slice",
            Op::Reshape(_) => "reshape",
            Op::Columns { .. } => "columns",
            Op::GatherRows { .. } => "gather_rows",
            Op::Concat(..) => "concat",
            Op::Conv2d { .. } => "conv2d",
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Append-only record of a computation.
///
/// Leaves created with [`Tape::leaf`] receive gradients on
/// [`Tape::backward`]; constants do not. Repeated backward calls add into
/// the leaf gradients until [`Tape::zero_grad`] is called.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    fault: Option<f64>,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::Shape {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn as_matrix(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(Error::Shape {
            op,
            lhs: t.shape().to_vec(),
            rhs: vec![],
        }),
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], idx: usize, contribution: Vec<f64>) {
    match &mut grads[idx] {
        Some(acc) => acc.iter_mut().zip(&contribution).for_each(|(a, b)| *a += b),
        slot @ None => *slot = Some(contribution),
    }
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

    /// Records a trainable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Leaf,
            value,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Records an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Constant,
            value,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a leaf, if backward has reached it.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    /// Moves a node's tensor (with its gradient) out of the tape.
    ///
    /// The node is left holding a placeholder; use this after the last
    /// backward call to recover parameters without copying them.
    pub fn take(&mut self, v: Var) -> Tensor {
        let placeholder = Tensor::from_parts(Vec::new(), vec![0.0]);
        std::mem::replace(&mut self.nodes[v.0].value, placeholder)
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.zero_grad();
        }
    }

    /// Scales every matmul gradient contribution by `factor`. Only used to
    /// confirm that gradient checks can fail.
    #[doc(hidden)]
    pub fn set_gradient_fault(&mut self, factor: Option<f64>) {
        self.fault = factor;
    }

    fn push(&mut self, op: Op, value: Tensor, requires_grad: bool) -> Result<Var> {
        if cfg!(debug_assertions) && !value.all_finite() {
            return Err(Error::NonFinite(op.name().to_string()));
        }
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = as_matrix(ta, "matmul")?;
        let (k2, n) = as_matrix(tb, "matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", ta, tb));
        }
        let data = kernels::matmul(ta.data(), tb.data(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::MatMul(a, b), Tensor::from_parts(vec![m, n], data), rg)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        let rg = self.rg(a);
        self.push(Op::Relu(a), value, rg)
    }

    fn broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<(Broadcast, Vec<usize>)> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() || (ta.len() == 1 && tb.len() == 1) {
            Ok((Broadcast::Same, ta.shape().to_vec()))
        } else if ta.len() == 1 {
            Ok((Broadcast::LhsScalar, tb.shape().to_vec()))
        } else if tb.len() == 1 {
            Ok((Broadcast::RhsScalar, ta.shape().to_vec()))
        } else {
            Err(shape_err(op, ta, tb))
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(Var, Var, Broadcast) -> Op,
    ) -> Result<Var> {
        let (bc, shape) = self.broadcast(name, a, b)?;
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let data: Vec<f64> = match bc {
            Broadcast::Same => da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect(),
            Broadcast::LhsScalar => db.iter().map(|&y| f(da[0], y)).collect(),
            Broadcast::RhsScalar => da.iter().map(|&x| f(x, db[0])).collect(),
        };
        let rg = self.rg(a) || self.rg(b);
        self.push(make(a, b, bc), Tensor::from_parts(shape, data), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| x * factor).collect();
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        let rg = self.rg(a);
        self.push(Op::Scale(a, factor), value, rg)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| x + c).collect();
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        let rg = self.rg(a);
        self.push(Op::AddScalar(a), value, rg)
    }

    /// Sum of all elements, accumulated in storage order.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().fold(0.0, |acc, &x| acc + x);
        let rg = self.rg(a);
        self.push(Op::Sum(a), Tensor::from_parts(Vec::new(), vec![s]), rg)
    }

    /// `sum(a) / len(a)`.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s = t.data().iter().fold(0.0, |acc, &x| acc + x);
        let m = s / t.len() as f64;
        let rg = self.rg(a);
        self.push(Op::Mean(a), Tensor::from_parts(Vec::new(), vec![m]), rg)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if let Some(x) = t.data().iter().find(|&&x| x < 0.0) {
            return Err(Error::domain(format!("sqrt of negative value {x}")));
        }
        let data = t.data().iter().map(|&x| x.sqrt()).collect();
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        let rg = self.rg(a);
        self.push(Op::Sqrt(a), value, rg)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| x.abs()).collect();
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        let rg = self.rg(a);
        self.push(Op::Abs(a), value, rg)
    }

    /// Row-wise minimum of an `m×n` matrix, returning the `[m]` minima and
    /// their column indices. Ties go to the lowest index; the gradient flows
    /// only into the selected element of each row.
    pub fn min_rows(&mut self, a: Var) -> Result<(Var, Vec<usize>)> {
        let t = self.value(a);
        let (m, n) = as_matrix(t, "min_rows")?;
        let (vals, argmin) = row_minima(t.data(), m, n)?;
        let rg = self.rg(a);
        let out = self.push(
            Op::MinRows {
                input: a,
                argmin: argmin.clone(),
            },
            Tensor::from_parts(vec![m], vals),
            rg,
        )?;
        Ok((out, argmin))
    }

    /// Minimum over all elements of `a` with its flat index.
    pub fn min_reduce(&mut self, a: Var) -> Result<(Var, usize)> {
        let n = self.value(a).len();
        let flat = self.reshape(a, vec![1, n])?;
        let (row, idx) = self.min_rows(flat)?;
        let scalar = self.reshape(row, Vec::new())?;
        Ok((scalar, idx[0]))
    }

    /// `a[m×n] + b[n]` with `b` added to every row.
    pub fn add_bias(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, n) = as_matrix(ta, "add_bias")?;
        if tb.len() != n {
            return Err(shape_err("add_bias", ta, tb));
        }
        let mut data = ta.data().to_vec();
        for row in data.chunks_exact_mut(n) {
            row.iter_mut().zip(tb.data()).for_each(|(x, &y)| *x += y);
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::AddBias(a, b), Tensor::from_parts(vec![m, n], data), rg)
    }

    /// Per-row sums of an `m×n` matrix, accumulated left to right.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = as_matrix(t, "sum_rows")?;
        let data = t
            .data()
            .chunks_exact(n)
            .map(|r| r.iter().fold(0.0, |acc, &x| acc + x))
            .collect();
        let rg = self.rg(a);
        self.push(Op::SumRows(a), Tensor::from_parts(vec![m], data), rg)
    }

    /// Contiguous range of the flat storage as a vector of length `len`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let t = self.value(a);
        if len == 0 || start + len > t.len() {
            return Err(Error::Shape {
                op: "slice",
                lhs: t.shape().to_vec(),
                rhs: vec![start, len],
            });
        }
        let data = t.data()[start..start + len].to_vec();
        let rg = self.rg(a);
        self.push(
            Op::Slice { input: a, start },
            Tensor::from_parts(vec![len], data),
            rg,
        )
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(a);
        if shape.iter().product::<usize>() != t.len() || shape.contains(&0) {
            return Err(Error::Shape {
                op: "reshape",
                lhs: t.shape().to_vec(),
                rhs: shape,
            });
        }
        let value = Tensor::from_parts(shape, t.data().to_vec());
        let rg = self.rg(a);
        self.push(Op::Reshape(a), value, rg)
    }

    /// Columns `start..start+count` of an `m×n` matrix.
    pub fn columns(&mut self, a: Var, start: usize, count: usize) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = as_matrix(t, "columns")?;
        if count == 0 || start + count > n {
            return Err(Error::Shape {
                op: "columns",
                lhs: t.shape().to_vec(),
                rhs: vec![start, count],
            });
        }
        let data = t
            .data()
            .chunks_exact(n)
            .flat_map(|r| r[start..start + count].iter().copied())
            .collect();
        let rg = self.rg(a);
        self.push(
            Op::Columns { input: a, start },
            Tensor::from_parts(vec![m, count], data),
            rg,
        )
    }

    /// Selects rows of an `m×n` matrix by index (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = as_matrix(t, "gather_rows")?;
        if index.is_empty() {
            return Err(Error::domain("gather_rows with empty index"));
        }
        if let Some(&bad) = index.iter().find(|&&i| i >= m) {
            return Err(Error::contract(format!(
                "gather_rows index {bad} out of range for {m} rows"
            )));
        }
        let mut data = Vec::with_capacity(index.len() * n);
        for &i in index {
            data.extend_from_slice(&t.data()[i * n..(i + 1) * n]);
        }
        let rg = self.rg(a);
        self.push(
            Op::GatherRows {
                input: a,
                index: index.to_vec(),
            },
            Tensor::from_parts(vec![index.len(), n], data),
            rg,
        )
    }

    /// Concatenation along the leading axis; trailing extents must agree.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().is_empty() || ta.shape().len() != tb.shape().len() || ta.shape()[1..] != tb.shape()[1..] {
            return Err(shape_err("concat", ta, tb));
        }
        let mut shape = ta.shape().to_vec();
        shape[0] += tb.shape()[0];
        let mut data = ta.data().to_vec();
        data.extend_from_slice(tb.data());
        let rg = self.rg(a) || self.rg(b);
        self.push(Op::Concat(a, b), Tensor::from_parts(shape, data), rg)
    }

    /// Direct 2-D convolution of a `C×H×W` input with an `O×C×K×K` kernel
    /// and per-channel bias, producing `O×H'×W'`.
    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, geom: ConvGeometry) -> Result<Var> {
        let (tx, tw, tb) = (self.value(input), self.value(weight), self.value(bias));
        let (c, h, w) = match *tx.shape() {
            [c, h, w] => (c, h, w),
            _ => return Err(shape_err("conv2d", tx, tw)),
        };
        let (o, k) = match *tw.shape() {
            [o, c2, k, k2] if c2 == c && k == k2 => (o, k),
            _ => return Err(shape_err("conv2d", tx, tw)),
        };
        if tb.len() != o {
            return Err(shape_err("conv2d", tw, tb));
        }
        if geom.stride == 0 || h + 2 * geom.padding < k || w + 2 * geom.padding < k {
            return Err(Error::domain(format!(
                "conv2d geometry {geom:?} invalid for kernel {k} on {h}x{w}"
            )));
        }
        let oh = (h + 2 * geom.padding - k) / geom.stride + 1;
        let ow = (w + 2 * geom.padding - k) / geom.stride + 1;
        let cols = im2col(tx.data(), c, h, w, k, geom, oh, ow);
        let mut out = kernels::matmul(tw.data(), &cols, o, c * k * k, oh * ow);
        for (row, &bo) in out.chunks_exact_mut(oh * ow).zip(tb.data()) {
            row.iter_mut().for_each(|v| *v += bo);
        }
        let rg = self.rg(input) || self.rg(weight) || self.rg(bias);
        self.push(
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            },
            Tensor::from_parts(vec![o, oh, ow], out),
            rg,
        )
    }

    /// Propagates gradients from the scalar `loss` back to every leaf.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lt = self.value(loss);
        if !lt.is_scalar() {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                self.nodes[i].value.accumulate_grad(&g);
                continue;
            }
            self.propagate(i, g, &mut grads);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: Vec<f64>, grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let want = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (val(*a), val(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                let fault = self.fault.unwrap_or(1.0);
                if want(*a) {
                    let mut ga = kernels::matmul_bt(&g, tb.data(), m, n, k);
                    if fault != 1.0 {
                        ga.iter_mut().for_each(|x| *x *= fault);
                    }
                    accumulate(grads, a.0, ga);
                }
                if want(*b) {
                    let gb = kernels::matmul_at(ta.data(), &g, m, k, n);
                    accumulate(grads, b.0, gb);
                }
            }
            Op::Relu(a) => {
                let x = val(*a).data();
                let ga = g.iter().zip(x).map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 }).collect();
                accumulate(grads, a.0, ga);
            }
            Op::Add(a, b, bc) => {
                self.binary_grad(*a, *b, *bc, &g, grads, |gi, _, _| (gi, gi));
            }
            Op::Sub(a, b, bc) => {
                self.binary_grad(*a, *b, *bc, &g, grads, |gi, _, _| (gi, -gi));
            }
            Op::Mul(a, b, bc) => {
                self.binary_grad(*a, *b, *bc, &g, grads, |gi, x, y| (gi * y, gi * x));
            }
            Op::Div(a, b, bc) => {
                self.binary_grad(*a, *b, *bc, &g, grads, |gi, x, y| (gi / y, -gi * x / (y * y)));
            }
            Op::Scale(a, f) => {
                accumulate(grads, a.0, g.iter().map(|&gi| gi * f).collect());
            }
            Op::AddScalar(a) => accumulate(grads, a.0, g),
            Op::Sum(a) => {
                let n = val(*a).len();
                accumulate(grads, a.0, vec![g[0]; n]);
            }
            Op::Mean(a) => {
                let n = val(*a).len();
                accumulate(grads, a.0, vec![g[0] / n as f64; n]);
            }
            Op::Sqrt(a) => {
                let y = node.value.data();
                let ga = g
                    .iter()
                    .zip(y)
                    .map(|(&gi, &yi)| if yi < SQRT_GRAD_FLOOR { 0.0 } else { gi * 0.5 / yi })
                    .collect();
                accumulate(grads, a.0, ga);
            }
            Op::Abs(a) => {
                let x = val(*a).data();
                let ga = g
                    .iter()
                    .zip(x)
                    .map(|(&gi, &xi)| {
                        if xi > 0.0 {
                            gi
                        } else if xi < 0.0 {
                            -gi
                        } else {
                            0.0
                        }
                    })
                    .collect();
                accumulate(grads, a.0, ga);
            }
            Op::MinRows { input, argmin } => {
                let n = val(*input).shape()[1];
                let mut ga = vec![0.0; val(*input).len()];
                for (r, (&j, &gi)) in argmin.iter().zip(&g).enumerate() {
                    ga[r * n + j] = gi;
                }
                accumulate(grads, input.0, ga);
            }
            Op::AddBias(a, b) => {
                let n = val(*b).len();
                if want(*b) {
                    let mut gb = vec![0.0; n];
                    for row in g.chunks_exact(n) {
                        gb.iter_mut().zip(row).for_each(|(s, &x)| *s += x);
                    }
                    accumulate(grads, b.0, gb);
                }
                if want(*a) {
                    accumulate(grads, a.0, g);
                }
            }
            Op::SumRows(a) => {
                let n = val(*a).shape()[1];
                let ga = g.iter().flat_map(|&gi| std::iter::repeat_n(gi, n)).collect();
                accumulate(grads, a.0, ga);
            }
            Op::Slice { input, start } => {
                let mut ga = vec![0.0; val(*input).len()];
                ga[*start..*start + g.len()].copy_from_slice(&g);
                accumulate(grads, input.0, ga);
            }
            Op::Reshape(a) => accumulate(grads, a.0, g),
            Op::Columns { input, start } => {
                let n = val(*input).shape()[1];
                let count = node.value.shape()[1];
                let mut ga = vec![0.0; val(*input).len()];
                for (r, row) in g.chunks_exact(count).enumerate() {
                    ga[r * n + start..r * n + start + count].copy_from_slice(row);
                }
                accumulate(grads, input.0, ga);
            }
            Op::GatherRows { input, index } => {
                let n = val(*input).shape()[1];
                let mut ga = vec![0.0; val(*input).len()];
                for (row, &src) in g.chunks_exact(n).zip(index) {
                    ga[src * n..(src + 1) * n]
                        .iter_mut()
                        .zip(row)
                        .for_each(|(s, &x)| *s += x);
                }
                accumulate(grads, input.0, ga);
            }
            Op::Concat(a, b) => {
                let na = val(*a).len();
                if want(*a) {
                    accumulate(grads, a.0, g[..na].to_vec());
                }
                if want(*b) {
                    accumulate(grads, b.0, g[na..].to_vec());
                }
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                geom,
                cols,
            } => {
                let (tx, tw) = (val(*input), val(*weight));
                let (c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2]);
                let (o, k) = (tw.shape()[0], tw.shape()[2]);
                let (oh, ow) = (node.value.shape()[1], node.value.shape()[2]);
                let ckk = c * k * k;
                let hw = oh * ow;
                if want(*bias) {
                    let gb = g.chunks_exact(hw).map(|r| r.iter().sum()).collect();
                    accumulate(grads, bias.0, gb);
                }
                if want(*weight) {
                    let gw = kernels::matmul_bt(&g, cols, o, hw, ckk);
                    accumulate(grads, weight.0, gw);
                }
                if want(*input) {
                    let gcols = kernels::matmul_at(tw.data(), &g, o, ckk, hw);
                    let gx = col2im(&gcols, c, h, w, k, *geom, oh, ow);
                    accumulate(grads, input.0, gx);
                }
            }
        }
    }

    fn binary_grad(
        &self,
        a: Var,
        b: Var,
        bc: Broadcast,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        rule: impl Fn(f64, f64, f64) -> (f64, f64),
    ) {
        let (da, db) = (self.nodes[a.0].value.data(), self.nodes[b.0].value.data());
        let n = g.len();
        let x = |i: usize| if bc == Broadcast::LhsScalar { da[0] } else { da[i] };
        let y = |i: usize| if bc == Broadcast::RhsScalar { db[0] } else { db[i] };
        let mut ga = vec![0.0; da.len()];
        let mut gb = vec![0.0; db.len()];
        for i in 0..n {
            let (ca, cb) = rule(g[i], x(i), y(i));
            if bc == Broadcast::LhsScalar {
                ga[0] += ca;
            } else {
                ga[i] = ca;
            }
            if bc == Broadcast::RhsScalar {
                gb[0] += cb;
            } else {
                gb[i] = cb;
            }
        }
        if self.nodes[a.0].requires_grad {
            accumulate(grads, a.0, ga);
        }
        if self.nodes[b.0].requires_grad {
            accumulate(grads, b.0, gb);
        }
    }
}

/// Row minima with lowest-index tie-breaking.
pub(crate) fn row_minima(data: &[f64], m: usize, n: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    if m == 0 || n == 0 {
        return Err(Error::domain("min-reduce over an empty set"));
    }
    let mut vals = Vec::with_capacity(m);
    let mut idx = Vec::with_capacity(m);
    for row in data.chunks_exact(n) {
        let mut best = 0;
        for (j, &x) in row.iter().enumerate().skip(1) {
            if x < row[best] {
                best = j;
            }
        }
        vals.push(row[best]);
        idx.push(best);
    }
    Ok((vals, idx))
}

#[allow(clippy::too_many_arguments)]
fn im2col(x: &[f64], c: usize, h: usize, w: usize, k: usize, geom: ConvGeometry, oh: usize, ow: usize) -> Vec<f64> {
    let hw = oh * ow;
    let mut cols = vec![0.0; c * k * k * hw];
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                for oi in 0..oh {
                    let yi = (oi * geom.stride + ki) as isize - geom.padding as isize;
                    if yi < 0 || yi >= h as isize {
                        continue;
                    }
                    for oj in 0..ow {
                        let xj = (oj * geom.stride + kj) as isize - geom.padding as isize;
                        if xj < 0 || xj >= w as isize {
                            continue;
                        }
                        dst[oi * ow + oj] = x[(ci * h + yi as usize) * w + xj as usize];
                    }
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize, geom: ConvGeometry, oh: usize, ow: usize) -> Vec<f64> {
    let hw = oh * ow;
    let mut x = vec![0.0; c * h * w];
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                let src = &cols[row * hw..(row + 1) * hw];
                for oi in 0..oh {
                    let yi = (oi * geom.stride + ki) as isize - geom.padding as isize;
                    if yi < 0 || yi >= h as isize {
                        continue;
                    }
                    for oj in 0..ow {
                        let xj = (oj * geom.stride + kj) as isize - geom.padding as isize;
                        if xj < 0 || xj >= w as isize {
                            continue;
                        }
                        x[(ci * h + yi as usize) * w + xj as usize] += src[oi * ow + oj];
                    }
                }
            }
        }
    }
    x
}
