//! Reverse-mode gradient tape.
//!
//! A [`Tape`] is an append-only list of nodes. Each node stores its forward
//! value and the operation that produced it, which is enough to both replay
//! the forward pass and accumulate gradients in reverse order. Nodes created
//! with [`Tape::constant`] never receive gradient, and neither does anything
//! computed only from constants.

use super::{gelu, gelu_grad, layer_norm_rows, matmul, row_stats, softmax_rows, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Param,
    Const,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    Transpose(Var),
    SoftmaxRows(Var),
    LayerNormRows {
        x: Var,
        gain: Var,
        bias: Var,
        eps: f64,
    },
    Gelu(Var),
    Relu(Var),
    MeanRows(Var),
    L2NormalizeRows(Var),
    SliceCols {
        x: Var,
        start: usize,
        len: usize,
    },
    ConcatCols(Vec<Var>),
    Sum(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
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

    /// A trainable leaf.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push_node(value, Op::Param, true)
    }

    /// A frozen leaf.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_node(value, Op::Const, false)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.as_slice()[0]
    }

    fn push_node(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op) -> Result<Var> {
        let value = eval(&op, |v| &self.nodes[v.0].value)?;
        let needs_grad = inputs(&op).iter().any(|v| self.nodes[v.0].needs_grad);
        Ok(self.push_node(value, op, needs_grad))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Sub(a, b))
    }

    /// Adds a `1 x cols` row to every row of `m`.
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var> {
        self.push(Op::AddRow(m, row))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        self.push(Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Result<Var> {
        self.push(Op::AddScalar(a, k))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Transpose(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        self.push(Op::SoftmaxRows(a))
    }

    pub fn layer_norm_rows(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        self.push(Op::LayerNormRows { x, gain, bias, eps })
    }

    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Gelu(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Relu(a))
    }

    /// Column means: `rows x cols` to `1 x cols`.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        self.push(Op::MeanRows(a))
    }

    pub fn l2_normalize_rows(&mut self, a: Var) -> Result<Var> {
        self.push(Op::L2NormalizeRows(a))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        self.push(Op::SliceCols { x, start, len })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        self.push(Op::ConcatCols(parts.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.push(Op::Sum(a))
    }

    /// Dot product of two `1 x n` rows as a `1 x 1` node.
    pub fn dot_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let prod = self.mul(a, b)?;
        self.sum(prod)
    }

    /// Recomputes every derived node from the stored leaves.
    pub fn replay(&self) -> Result<Vec<Matrix>> {
        let mut values: Vec<Matrix> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Param | Op::Const => node.value.clone(),
                ref op => eval(op, |v| &values[v.0])?,
            };
            values.push(v);
        }
        Ok(values)
    }

    pub fn backward(&self, loss: Var, loss_grad: f64) -> Result<Gradients> {
        backward(self, loss, loss_grad)
    }
}

fn inputs(op: &Op) -> Vec<Var> {
    match op {
        Op::Param | Op::Const => vec![],
        Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::AddRow(a, b) | Op::Mul(a, b) => {
            vec![*a, *b]
        }
        Op::Scale(a, _)
        | Op::AddScalar(a, _)
        | Op::Transpose(a)
        | Op::SoftmaxRows(a)
        | Op::Gelu(a)
        | Op::Relu(a)
        | Op::MeanRows(a)
        | Op::L2NormalizeRows(a)
        | Op::Sum(a) => vec![*a],
        Op::SliceCols { x, .. } => vec![*x],
        Op::LayerNormRows { x, gain, bias, .. } => vec![*x, *gain, *bias],
        Op::ConcatCols(parts) => parts.clone(),
    }
}

fn eval<'a>(op: &Op, get: impl Fn(Var) -> &'a Matrix) -> Result<Matrix> {
    Ok(match op {
        Op::Param | Op::Const => unreachable!("leaves are not evaluated"),
        Op::MatMul(a, b) => matmul(get(*a), get(*b))?,
        Op::Add(a, b) => get(*a).add(get(*b))?,
        Op::Sub(a, b) => get(*a).sub(get(*b))?,
        Op::Mul(a, b) => {
            let (x, y) = (get(*a), get(*b));
            if x.shape() != y.shape() {
                return Err(Error::shape(
                    "mul",
                    format!("{:?} vs {:?}", x.shape(), y.shape()),
                ));
            }
            Matrix::from_raw(
                x.rows(),
                x.cols(),
                x.as_slice()
                    .iter()
                    .zip(y.as_slice())
                    .map(|(p, q)| p * q)
                    .collect(),
            )
        }
        Op::AddRow(m, row) => {
            let (m, row) = (get(*m), get(*row));
            if row.shape() != (1, m.cols()) {
                return Err(Error::shape(
                    "add_row",
                    format!("{:?} + row {:?}", m.shape(), row.shape()),
                ));
            }
            let mut out = m.clone();
            for chunk in out.as_mut_slice().chunks_mut(m.cols().max(1)) {
                for (o, r) in chunk.iter_mut().zip(row.as_slice()) {
                    *o += r;
                }
            }
            out
        }
        Op::Scale(a, k) => get(*a).scale(*k),
        Op::AddScalar(a, k) => get(*a).map(|v| v + k),
        Op::Transpose(a) => get(*a).transpose(),
        Op::SoftmaxRows(a) => softmax_rows(get(*a)),
        Op::LayerNormRows { x, gain, bias, eps } => {
            layer_norm_rows(get(*x), get(*gain), get(*bias), *eps)?
        }
        Op::Gelu(a) => get(*a).map(gelu),
        Op::Relu(a) => get(*a).map(|v| v.max(0.0)),
        Op::MeanRows(a) => {
            let m = get(*a);
            if m.rows() == 0 {
                return Err(Error::shape("mean_rows", "no rows"));
            }
            let mut out = vec![0.0; m.cols()];
            for r in 0..m.rows() {
                for (o, v) in out.iter_mut().zip(m.row(r)) {
                    *o += v;
                }
            }
            let n = m.rows() as f64;
            Matrix::from_raw(1, m.cols(), out.into_iter().map(|v| v / n).collect())
        }
        Op::L2NormalizeRows(a) => {
            let m = get(*a);
            let mut out = m.clone();
            for row in out.as_mut_slice().chunks_mut(m.cols().max(1)) {
                let n = super::norm(row);
                if n == 0.0 {
                    return Err(Error::ZeroVector);
                }
                row.iter_mut().for_each(|v| *v /= n);
            }
            out
        }
        Op::SliceCols { x, start, len } => {
            let m = get(*x);
            if start + len > m.cols() {
                return Err(Error::shape(
                    "slice_cols",
                    format!("[{start}, {}) of {} cols", start + len, m.cols()),
                ));
            }
            let mut out = Vec::with_capacity(m.rows() * len);
            for r in 0..m.rows() {
                out.extend_from_slice(&m.row(r)[*start..start + len]);
            }
            Matrix::from_raw(m.rows(), *len, out)
        }
        Op::ConcatCols(parts) => {
            let mats: Vec<&Matrix> = parts.iter().map(|v| get(*v)).collect();
            let rows = mats.first().map_or(0, |m| m.rows());
            if mats.iter().any(|m| m.rows() != rows) {
                return Err(Error::shape("concat_cols", "row counts differ"));
            }
            let cols: usize = mats.iter().map(|m| m.cols()).sum();
            let mut out = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for m in &mats {
                    out.extend_from_slice(m.row(r));
                }
            }
            Matrix::from_raw(rows, cols, out)
        }
        Op::Sum(a) => Matrix::from_raw(1, 1, vec![get(*a).as_slice().iter().sum()]),
    })
}

/// Gradients indexed by [`Var`]; leaves that did not influence the output
/// read back as zeros.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Matrix {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

pub fn backward(tape: &Tape, loss: Var, loss_grad: f64) -> Result<Gradients> {
    let out = &tape.nodes[loss.0].value;
    if out.shape() != (1, 1) {
        return Err(Error::NonScalarOutput {
            rows: out.rows(),
            cols: out.cols(),
        });
    }
    let mut grads: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
    grads[loss.0] = Some(Matrix::filled(1, 1, loss_grad));

    for idx in (0..=loss.0).rev() {
        let node = &tape.nodes[idx];
        if !node.needs_grad || matches!(node.op, Op::Param | Op::Const) {
            continue;
        }
        let Some(g) = grads[idx].take() else { continue };
        let val = |v: Var| &tape.nodes[v.0].value;
        let mut acc = |v: Var, d: Matrix| {
            if !tape.nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&d),
                slot @ None => *slot = Some(d),
            }
        };
        match &node.op {
            Op::Param | Op::Const => unreachable!(),
            Op::MatMul(a, b) => {
                if tape.nodes[a.0].needs_grad {
                    acc(*a, matmul(&g, &val(*b).transpose())?);
                }
                if tape.nodes[b.0].needs_grad {
                    acc(*b, matmul(&val(*a).transpose(), &g)?);
                }
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g);
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-1.0));
            }
            Op::AddRow(m, row) => {
                let mut dr = vec![0.0; g.cols()];
                for r in 0..g.rows() {
                    for (d, v) in dr.iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                acc(*row, Matrix::from_raw(1, g.cols(), dr));
                acc(*m, g);
            }
            Op::Mul(a, b) => {
                let (x, y) = (val(*a), val(*b));
                let zip = |m: &Matrix| {
                    Matrix::from_raw(
                        g.rows(),
                        g.cols(),
                        g.as_slice()
                            .iter()
                            .zip(m.as_slice())
                            .map(|(p, q)| p * q)
                            .collect(),
                    )
                };
                acc(*a, zip(y));
                acc(*b, zip(x));
            }
            Op::Scale(a, k) => acc(*a, g.scale(*k)),
            Op::AddScalar(a, _) => acc(*a, g),
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::SoftmaxRows(a) => {
                let y = &node.value;
                let cols = y.cols();
                let mut dx = Vec::with_capacity(y.len());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let inner: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    dx.extend(yr.iter().zip(gr).map(|(p, q)| p * (q - inner)));
                }
                acc(*a, Matrix::from_raw(y.rows(), cols, dx));
            }
            Op::LayerNormRows { x, gain, bias, eps } => {
                let xm = val(*x);
                let gm = val(*gain).as_slice();
                let n = xm.cols();
                let nf = n as f64;
                let mut dx = Vec::with_capacity(xm.len());
                let mut dgain = vec![0.0; n];
                let mut dbias = vec![0.0; n];
                for r in 0..xm.rows() {
                    let xr = xm.row(r);
                    let gr = g.row(r);
                    let (mean, inv) = row_stats(xr, *eps);
                    let xhat: Vec<f64> = xr.iter().map(|v| (v - mean) * inv).collect();
                    let dxhat: Vec<f64> = gr.iter().zip(gm).map(|(p, q)| p * q).collect();
                    let s1: f64 = dxhat.iter().sum();
                    let s2: f64 = dxhat.iter().zip(&xhat).map(|(p, q)| p * q).sum();
                    for j in 0..n {
                        dgain[j] += gr[j] * xhat[j];
                        dbias[j] += gr[j];
                        dx.push(inv / nf * (nf * dxhat[j] - s1 - xhat[j] * s2));
                    }
                }
                acc(*x, Matrix::from_raw(xm.rows(), n, dx));
                acc(*gain, Matrix::from_raw(1, n, dgain));
                acc(*bias, Matrix::from_raw(1, n, dbias));
            }
            Op::Gelu(a) => {
                let x = val(*a);
                acc(
                    *a,
                    Matrix::from_raw(
                        x.rows(),
                        x.cols(),
                        x.as_slice()
                            .iter()
                            .zip(g.as_slice())
                            .map(|(&v, &d)| d * gelu_grad(v))
                            .collect(),
                    ),
                );
            }
            Op::Relu(a) => {
                let x = val(*a);
                acc(
                    *a,
                    Matrix::from_raw(
                        x.rows(),
                        x.cols(),
                        x.as_slice()
                            .iter()
                            .zip(g.as_slice())
                            .map(|(&v, &d)| if v > 0.0 { d } else { 0.0 })
                            .collect(),
                    ),
                );
            }
            Op::MeanRows(a) => {
                let x = val(*a);
                let n = x.rows() as f64;
                let mut d = Vec::with_capacity(x.len());
                for _ in 0..x.rows() {
                    d.extend(g.as_slice().iter().map(|v| v / n));
                }
                acc(*a, Matrix::from_raw(x.rows(), x.cols(), d));
            }
            Op::L2NormalizeRows(a) => {
                let x = val(*a);
                let y = &node.value;
                let mut d = Vec::with_capacity(x.len());
                for r in 0..x.rows() {
                    let n = super::norm(x.row(r));
                    let (yr, gr) = (y.row(r), g.row(r));
                    let yg: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    d.extend(yr.iter().zip(gr).map(|(p, q)| (q - p * yg) / n));
                }
                acc(*a, Matrix::from_raw(x.rows(), x.cols(), d));
            }
            Op::SliceCols { x, start, len } => {
                let xm = val(*x);
                let mut d = Matrix::zeros(xm.rows(), xm.cols());
                for r in 0..xm.rows() {
                    for c in 0..*len {
                        d.set(r, start + c, g.get(r, c));
                    }
                }
                acc(*x, d);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let cols = val(*p).cols();
                    let mut d = Vec::with_capacity(g.rows() * cols);
                    for r in 0..g.rows() {
                        d.extend_from_slice(&g.row(r)[offset..offset + cols]);
                    }
                    acc(*p, Matrix::from_raw(g.rows(), cols, d));
                    offset += cols;
                }
            }
            Op::Sum(a) => {
                let x = val(*a);
                acc(*a, Matrix::filled(x.rows(), x.cols(), g.as_slice()[0]));
            }
        }
    }

    grads.resize(tape.nodes.len(), None);
    for (i, node) in tape.nodes.iter().enumerate() {
        if !matches!(node.op, Op::Param) {
            grads[i] = None;
        }
    }
    Ok(Gradients {
        grads,
        shapes: tape.nodes.iter().map(|n| n.value.shape()).collect(),
    })
}
