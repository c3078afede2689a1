//! Dense `f64` linear algebra and the differentiable primitives used by the
//! encoder, the linear head and the triplet objective.
//!
//! Every reduction runs sequentially in row-major order so results are
//! bit-reproducible across runs.

mod matrix;
mod tape;

pub use matrix::Matrix;
pub use tape::{backward, Gradients, Tape, Var};

use crate::error::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.rows() {
        return Err(Error::shape(
            "matmul",
            format!("{}x{} * {}x{}", a.rows(), a.cols(), b.rows(), b.cols()),
        ));
    }
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let (av, bv) = (a.as_slice(), b.as_slice());
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = av[i * k + p];
            let brow = &bv[p * m..(p + 1) * m];
            for (o, &bpj) in row.iter_mut().zip(brow) {
                *o += aip * bpj;
            }
        }
    }
    Ok(Matrix::from_raw(n, m, out))
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    let cols = m.cols();
    if cols == 0 {
        return out;
    }
    for row in out.as_mut_slice().chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// `gain ⊙ (x − mean) / sqrt(var + eps) + bias` over one row vector,
/// with the population variance.
pub fn layer_norm(x: &[f64], gain: &[f64], bias: &[f64], eps: f64) -> Result<Vec<f64>> {
    if x.is_empty() || gain.len() != x.len() || bias.len() != x.len() {
        return Err(Error::shape(
            "layer_norm",
            format!("x {}, gain {}, bias {}", x.len(), gain.len(), bias.len()),
        ));
    }
    let (mean, inv_std) = row_stats(x, eps);
    Ok(x.iter()
        .zip(gain.iter().zip(bias))
        .map(|(&v, (&g, &b))| g * (v - mean) * inv_std + b)
        .collect())
}

pub(crate) fn row_stats(x: &[f64], eps: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

/// Applies [`layer_norm`] to every row; `gain` and `bias` are `1 x cols`.
pub fn layer_norm_rows(x: &Matrix, gain: &Matrix, bias: &Matrix, eps: f64) -> Result<Matrix> {
    if gain.shape() != (1, x.cols()) || bias.shape() != (1, x.cols()) {
        return Err(Error::shape(
            "layer_norm_rows",
            format!(
                "x {:?}, gain {:?}, bias {:?}",
                x.shape(),
                gain.shape(),
                bias.shape()
            ),
        ));
    }
    let mut out = Vec::with_capacity(x.len());
    for r in 0..x.rows() {
        out.extend(layer_norm(x.row(r), gain.as_slice(), bias.as_slice(), eps)?);
    }
    Ok(Matrix::from_raw(x.rows(), x.cols(), out))
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Tanh approximation of GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
