use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::numkit::{Matrix, Vector};
use crate::recsys::EmbeddingTable;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub rows: Vec<(String, f64, f64)>,
    /// Variance captured by each of the two axes.
    pub explained: [f64; 2],
    pub total_variance: f64,
    /// Set when the data has fewer than two effective dimensions.
    pub warning: Option<String>,
}

impl Projection {
    /// `id<TAB>x<TAB>y` rows with a header line.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("id\tx\ty\n");
        for (id, x, y) in &self.rows {
            s.push_str(&format!("{id}\t{x}\t{y}\n"));
        }
        s
    }
}

const MAX_ITERS: usize = 20_000;

/// Leading eigenpair of a symmetric PSD matrix by power iteration.
fn leading_eigen(c: &Matrix) -> (f64, Vector) {
    let d = c.nrows();
    // start from the row with the largest norm; it has a component along
    // the leading direction unless the matrix is zero
    let start = (0..d)
        .max_by(|&a, &b| {
            let na = c.row(a).dot(&c.row(a));
            let nb = c.row(b).dot(&c.row(b));
            na.partial_cmp(&nb)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(b.cmp(&a))
        })
        .unwrap_or(0);
    let mut v = c.row(start).to_owned() + 1e-3 / (d as f64).sqrt();
    let n = v.dot(&v).sqrt();
    if n == 0.0 {
        return (0.0, Vector::zeros(d));
    }
    v /= n;
    for _ in 0..MAX_ITERS {
        let w = c.dot(&v);
        let nw = w.dot(&w).sqrt();
        if nw == 0.0 {
            return (0.0, v);
        }
        let next = w / nw;
        let delta = (&next - &v).mapv(f64::abs).sum();
        v = next;
        if delta < 1e-15 {
            break;
        }
    }
    (v.dot(&c.dot(&v)), v)
}

fn fix_sign(v: &mut Vector) {
    let lead = v.iter().enumerate().fold((0usize, 0.0f64), |best, (i, x)| {
        if x.abs() > best.1.abs() + 1e-12 {
            (i, *x)
        } else {
            best
        }
    });
    if lead.1 < 0.0 {
        v.mapv_inplace(|x| -x);
    }
}

/// Two-component principal projection of the rows of `table` named by
/// `ids`. Axes are signed so that each axis's largest-magnitude loading is
/// positive.
pub fn project_2d<S: AsRef<str>>(table: &EmbeddingTable, ids: &[S]) -> Result<Projection> {
    if ids.len() < 2 {
        return Err(Error::Domain(
            "projection needs at least two vectors".into(),
        ));
    }
    let sub = table.subset(ids)?;
    let x = sub.vectors();
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let centered = x - &mean;
    let cov = centered.t().dot(&centered) / ids.len() as f64;
    let total: f64 = cov.diag().sum();

    let (l1, mut v1) = leading_eigen(&cov);
    fix_sign(&mut v1);
    let deflated = &cov - &(l1 * outer(&v1, &v1));
    let (l2, mut v2) = leading_eigen(&deflated);
    fix_sign(&mut v2);

    let tol = 1e-10 * total.max(f64::MIN_POSITIVE);
    let mut warning = None;
    let xs = centered.dot(&v1);
    let ys = if l2 <= tol {
        warning = Some(format!(
            "embeddings span fewer than two effective dimensions; second coordinate set to 0 (λ₂ = {l2:e})"
        ));
        Vector::zeros(ids.len())
    } else {
        centered.dot(&v2)
    };
    Ok(Projection {
        rows: sub
            .ids()
            .iter()
            .zip(xs.iter().zip(ys.iter()))
            .map(|(id, (&a, &b))| (id.clone(), a, b))
            .collect(),
        explained: [l1, if warning.is_some() { 0.0 } else { l2 }],
        total_variance: total,
        warning,
    })
}

fn outer(a: &Vector, b: &Vector) -> Matrix {
    Matrix::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}
