use ndarray::{concatenate, s, Axis};

use crate::numkit::{log_softmax_row, Matrix};
use crate::{Error, Result};

/// One bidirectional contrast problem.
///
/// Audio-to-text logits are `anchors_a · [positives_t; negatives_t]ᵀ / τ`;
/// text-to-audio logits are `anchors_t · [positives_a; negatives_a]ᵀ / τ`.
/// Target rows are distributions over the `B + Q` candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastBatch {
    pub anchors_a: Matrix,
    pub anchors_t: Matrix,
    pub positives_a: Matrix,
    pub positives_t: Matrix,
    pub negatives_a: Matrix,
    pub negatives_t: Matrix,
    pub targets_a2t: Matrix,
    pub targets_t2a: Matrix,
}

/// Gradients of the contrast loss with respect to every non-queue input.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastGrads {
    pub anchors_a: Matrix,
    pub anchors_t: Matrix,
    pub positives_a: Matrix,
    pub positives_t: Matrix,
}

/// One-hot diagonal targets padded with `q` zero columns.
pub fn diagonal_targets(b: usize, q: usize) -> Matrix {
    let mut y = Matrix::zeros((b, b + q));
    for i in 0..b {
        y[[i, i]] = 1.0;
    }
    y
}

fn check_targets(name: &str, y: &Matrix, b: usize, q: usize) -> Result<()> {
    if y.dim() != (b, b + q) {
        return Err(Error::Shape(format!(
            "{name} has shape {:?}, expected ({b}, {})",
            y.dim(),
            b + q
        )));
    }
    for (i, row) in y.rows().into_iter().enumerate() {
        if row.iter().any(|v| !(*v >= 0.0)) || (row.sum() - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!(
                "{name} row {i} is not a distribution"
            )));
        }
    }
    Ok(())
}

/// Returns `(Σ_i CE_i, dΣ/dlogits)` for one direction.
fn direction(
    anchors: &Matrix,
    candidates: &Matrix,
    targets: &Matrix,
    tau: f64,
) -> Result<(f64, Matrix)> {
    let logits = anchors.dot(&candidates.t()) / tau;
    let mut total = 0.0;
    let mut grad = Matrix::zeros(logits.dim());
    for ((row, y), mut g) in logits
        .rows()
        .into_iter()
        .zip(targets.rows())
        .zip(grad.rows_mut())
    {
        let logp = log_softmax_row(row);
        total -= y
            .iter()
            .zip(logp.iter())
            .filter(|(t, _)| **t != 0.0)
            .map(|(t, lp)| t * lp)
            .sum::<f64>();
        g.assign(&(logp.mapv(f64::exp) - y));
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("contrast loss".into()));
    }
    Ok((total, grad))
}

/// `½ · mean_i [CE(y_i^{a2t}, ŷ_i^{a2t}) + CE(y_i^{t2a}, ŷ_i^{t2a})]`.
///
/// Cross-entropy is evaluated through an exact log-softmax; queue negatives
/// are constants and receive no gradient.
pub fn contrast(batch: &ContrastBatch, tau: f64) -> Result<(f64, ContrastGrads)> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("temperature must be > 0, got {tau}")));
    }
    let b = batch.anchors_a.nrows();
    let d = batch.anchors_a.ncols();
    if b == 0 {
        return Err(Error::Domain("contrast over an empty batch".into()));
    }
    let q = batch.negatives_a.nrows();
    for (name, m, rows) in [
        ("anchors_t", &batch.anchors_t, b),
        ("positives_a", &batch.positives_a, b),
        ("positives_t", &batch.positives_t, b),
        ("negatives_t", &batch.negatives_t, q),
    ] {
        if m.dim() != (rows, d) {
            return Err(Error::Shape(format!(
                "{name} has shape {:?}, expected ({rows}, {d})",
                m.dim()
            )));
        }
    }
    if batch.negatives_a.ncols() != d {
        return Err(Error::Shape("negatives_a has the wrong width".into()));
    }
    check_targets("targets_a2t", &batch.targets_a2t, b, q)?;
    check_targets("targets_t2a", &batch.targets_t2a, b, q)?;

    let cand_t = concatenate![Axis(0), batch.positives_t, batch.negatives_t];
    let cand_a = concatenate![Axis(0), batch.positives_a, batch.negatives_a];
    let (l_a2t, g_a2t) = direction(&batch.anchors_a, &cand_t, &batch.targets_a2t, tau)?;
    let (l_t2a, g_t2a) = direction(&batch.anchors_t, &cand_a, &batch.targets_t2a, tau)?;

    let scale = 1.0 / (2.0 * b as f64 * tau);
    let g_a2t = g_a2t * scale;
    let g_t2a = g_t2a * scale;
    let grads = ContrastGrads {
        anchors_a: g_a2t.dot(&cand_t),
        positives_t: g_a2t.slice(s![.., ..b]).t().dot(&batch.anchors_a),
        anchors_t: g_t2a.dot(&cand_a),
        positives_a: g_t2a.slice(s![.., ..b]).t().dot(&batch.anchors_t),
    };
    Ok(((l_a2t + l_t2a) / (2.0 * b as f64), grads))
}
