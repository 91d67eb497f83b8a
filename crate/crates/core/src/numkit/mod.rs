//! Dense numeric kernels shared by every trainable component.
//!
//! All arithmetic is `f64`. Matrices are `ndarray` arrays in row-major
//! order; embeddings are stored one per row.

mod gradcheck;
mod layers;
mod optim;
mod param;

pub use gradcheck::{finite_diff_check, GradCheckReport};
pub use layers::{Activation, Linear, Mlp, MlpCache};
pub use optim::{Adam, AdamConfig, SgdMomentum};
pub use param::{ParamTensor, Parameterized};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Result};

pub type Matrix = Array2<f64>;
pub type Vector = Array1<f64>;

/// Lower clamp applied to predicted probabilities before taking a log.
pub const LOG_CLAMP: f64 = 1e-12;

/// Temperature-scaled softmax with max subtraction.
pub fn softmax(v: ArrayView1<f64>, temperature: f64) -> Result<Vector> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Domain(format!(
            "softmax temperature must be > 0, got {temperature}"
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("softmax input".into()));
    }
    if v.is_empty() {
        return Ok(Vector::zeros(0));
    }
    let max = v.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let mut out = v.mapv(|x| ((x - max) / temperature).exp());
    let sum = out.sum();
    out /= sum;
    Ok(out)
}

/// Log-softmax of a row of logits (temperature already applied).
pub(crate) fn log_softmax_row(logits: ArrayView1<f64>) -> Vector {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let lse = logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
    logits.mapv(|x| x - lse)
}

/// Row-wise softmax of a matrix, in place.
pub(crate) fn softmax_rows_inplace(m: &mut Matrix) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &x| a.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let s = row.sum();
        row /= s;
    }
}

pub fn l2_norm(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

pub fn cosine_sim(u: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!(
            "cosine_sim lengths differ: {} vs {}",
            u.len(),
            v.len()
        )));
    }
    let nu = l2_norm(u);
    let nv = l2_norm(v);
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Degenerate("cosine_sim of a zero-norm vector".into()));
    }
    Ok((u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// `-sum_i target_i * ln(max(pred_i, LOG_CLAMP))`.
pub fn cross_entropy(target: ArrayView1<f64>, pred: ArrayView1<f64>) -> Result<f64> {
    if target.len() != pred.len() {
        return Err(Error::Shape(format!(
            "cross_entropy lengths differ: {} vs {}",
            target.len(),
            pred.len()
        )));
    }
    let ce = target
        .iter()
        .zip(pred.iter())
        .filter(|(t, _)| **t != 0.0)
        .map(|(t, p)| -t * p.max(LOG_CLAMP).ln())
        .sum::<f64>();
    Ok(ce.max(0.0))
}

pub fn normalize(v: ArrayView1<f64>) -> Result<Vector> {
    let n = l2_norm(v);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Degenerate(
            "cannot normalize a zero-norm vector".into(),
        ));
    }
    Ok(v.mapv(|x| x / n))
}

/// Normalizes every row to unit length, returning the normalized rows and the
/// original norms (needed by [`normalize_rows_backward`]).
pub fn normalize_rows(m: ArrayView2<f64>) -> Result<(Matrix, Vector)> {
    let norms: Vector = m.rows().into_iter().map(l2_norm).collect();
    if let Some(i) = norms.iter().position(|n| !(*n > 0.0) || !n.is_finite()) {
        return Err(Error::Degenerate(format!(
            "row {i} has zero or non-finite norm"
        )));
    }
    let out = &m / &norms.view().insert_axis(Axis(1));
    Ok((out, norms))
}

/// Backward pass of row normalization: given `y = x / |x|` and `dL/dy`,
/// returns `dL/dx = (dL/dy - y <y, dL/dy>) / |x|`.
pub fn normalize_rows_backward(normalized: &Matrix, norms: &Vector, grad: &Matrix) -> Matrix {
    let mut out = grad.clone();
    for ((mut g, y), n) in out
        .rows_mut()
        .into_iter()
        .zip(normalized.rows())
        .zip(norms.iter())
    {
        let proj = y.dot(&g);
        g.scaled_add(-proj, &y);
        g /= *n;
    }
    out
}

/// Arithmetic mean of the given rows.
pub fn mean_rows(m: ArrayView2<f64>) -> Result<Vector> {
    m.mean_axis(Axis(0))
        .ok_or_else(|| Error::Domain("mean of zero rows".into()))
}

pub fn random_normal_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    std: f64,
    rng: &mut R,
) -> Matrix {
    Matrix::from_shape_simple_fn((rows, cols), || {
        let z: f64 = StandardNormal.sample(rng);
        z * std
    })
}
