//! Central-difference gradient verification.

use super::Parameterized;
use crate::{Error, Result};

/// Coordinates where `|analytic| + |numeric|` falls below this are skipped.
const SKIP_BELOW: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter index, flat coordinate) of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub skipped: usize,
}

/// Compares analytic gradients against `(f(θ+h) - f(θ-h)) / 2h`.
///
/// `f` must evaluate the scalar objective at the model's current parameters
/// and *accumulate* its analytic gradient into the parameter `grad` fields.
/// Gradients are zeroed before the analytic pass. The relative error of a
/// coordinate is `|a - n| / (|a| + |n|)`.
pub fn finite_diff_check<M, F>(model: &mut M, mut f: F, h: f64) -> Result<GradCheckReport>
where
    M: Parameterized,
    F: FnMut(&mut M) -> Result<f64>,
{
    model.zero_grad();
    let base = f(model)?;
    if !base.is_finite() {
        return Err(Error::NonFinite("objective at base point".into()));
    }
    let analytic: Vec<_> = model.params_mut().iter().map(|p| p.grad.clone()).collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped: 0,
    };
    for (pi, grad) in analytic.iter().enumerate() {
        for (ci, &a) in grad.iter().enumerate() {
            let orig = {
                let mut params = model.params_mut();
                let slot = params[pi]
                    .value
                    .as_slice_mut()
                    .expect("params are contiguous");
                let orig = slot[ci];
                slot[ci] = orig + h;
                orig
            };
            let plus = f(model)?;
            set_coord(model, pi, ci, orig - h);
            let minus = f(model)?;
            set_coord(model, pi, ci, orig);
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!(
                    "objective at perturbed coordinate ({pi}, {ci})"
                )));
            }
            let n = (plus - minus) / (2.0 * h);
            let denom = a.abs() + n.abs();
            if denom <= SKIP_BELOW {
                report.skipped += 1;
                continue;
            }
            report.checked += 1;
            let rel = (a - n).abs() / denom;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((pi, ci));
            }
        }
    }
    // leave the analytic gradient in place for the caller
    for (p, g) in model.params_mut().into_iter().zip(analytic) {
        p.grad = g;
    }
    Ok(report)
}

fn set_coord<M: Parameterized>(model: &mut M, pi: usize, ci: usize, value: f64) {
    let mut params = model.params_mut();
    params[pi]
        .value
        .as_slice_mut()
        .expect("params are contiguous")[ci] = value;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{Matrix, ParamTensor};
    use ndarray::array;

    #[test]
    fn quadratic_is_exact() {
        let mut p = ParamTensor::new(array![[3.0]]);
        let report = finite_diff_check(
            &mut p,
            |p| {
                let v = p.value[[0, 0]];
                p.grad[[0, 0]] += v;
                Ok(0.5 * v * v)
            },
            1e-5,
        )
        .unwrap();
        assert_eq!(p.grad[[0, 0]], 3.0);
        assert!(report.max_rel_error < 1e-8, "{report:?}");
        assert_eq!(report.checked, 1);
    }

    #[test]
    fn constant_passes_vacuously() {
        let mut p = ParamTensor::new(array![[1.0, -2.0]]);
        let report = finite_diff_check(&mut p, |_| Ok(7.0), 1e-5).unwrap();
        assert_eq!(report.max_rel_error, 0.0);
        assert_eq!(report.checked, 0);
        assert_eq!(report.skipped, 2);
    }

    #[test]
    fn product_rule() {
        let mut p = ParamTensor::new(array![[2.0, 5.0]]);
        let report = finite_diff_check(
            &mut p,
            |p| {
                let (a, b) = (p.value[[0, 0]], p.value[[0, 1]]);
                p.grad[[0, 0]] += b;
                p.grad[[0, 1]] += a;
                Ok(a * b)
            },
            1e-5,
        )
        .unwrap();
        assert_eq!(p.grad, array![[5.0, 2.0]]);
        assert!(report.max_rel_error < 1e-6);
    }

    #[test]
    fn detects_wrong_gradient() {
        let mut p = ParamTensor::new(Matrix::from_elem((1, 1), 2.0));
        let report = finite_diff_check(
            &mut p,
            |p| {
                let v = p.value[[0, 0]];
                p.grad[[0, 0]] += 3.0 * v; // wrong: should be 2v
                Ok(v * v)
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error > 0.1);
    }

    #[test]
    fn non_finite_objective_propagates() {
        let mut p = ParamTensor::new(array![[1.0]]);
        let err = finite_diff_check(&mut p, |_| Ok(f64::NAN), 1e-5).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }
}
