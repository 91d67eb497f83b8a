//! One-layer self-attention over a playlist's member representations,
//! mean-pooled and L2-normalized.

use ndarray::{Array1, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::numkit::{
    random_normal_matrix, softmax_rows_inplace, Matrix, ParamTensor, Parameterized, Vector,
};
use crate::{Error, Result};

/// Query, key and value projections, each `d × d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    pub w_q: ParamTensor,
    pub w_k: ParamTensor,
    pub w_v: ParamTensor,
}

/// Intermediate values of [`FusionParams::forward`].
#[derive(Debug, Clone)]
pub struct FusionForward {
    pub out: Vector,
    /// Row-stochastic `J × J` attention weights.
    pub attention: Matrix,
    x: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    norm: f64,
}

impl FusionParams {
    pub fn identity(d: usize) -> Self {
        Self {
            w_q: ParamTensor::new(Matrix::eye(d)),
            w_k: ParamTensor::new(Matrix::eye(d)),
            w_v: ParamTensor::new(Matrix::eye(d)),
        }
    }

    /// `W_V = I`; `W_Q`, `W_K` drawn from `N(0, std²)`. With small `std`
    /// the initial attention is close to uniform and fusion starts as a
    /// normalized mean.
    pub fn init<R: Rng + ?Sized>(d: usize, std: f64, rng: &mut R) -> Self {
        Self {
            w_q: ParamTensor::new(random_normal_matrix(d, d, std, rng)),
            w_k: ParamTensor::new(random_normal_matrix(d, d, std, rng)),
            w_v: ParamTensor::new(Matrix::eye(d)),
        }
    }

    pub fn dim(&self) -> usize {
        self.w_q.value.nrows()
    }

    pub fn forward(&self, x: &Matrix) -> Result<FusionForward> {
        let (j, d) = x.dim();
        if j == 0 {
            return Err(Error::EmptyPlaylist(
                "fusion needs at least one member row".into(),
            ));
        }
        if d != self.dim() {
            return Err(Error::Shape(format!(
                "fusion expects width {}, got {d}",
                self.dim()
            )));
        }
        let q = x.dot(&self.w_q.value.t());
        let k = x.dot(&self.w_k.value.t());
        let v = x.dot(&self.w_v.value.t());
        let mut attention = q.dot(&k.t()) / (d as f64).sqrt();
        softmax_rows_inplace(&mut attention);
        let pooled: Array1<f64> = attention.dot(&v).mean_axis(Axis(0)).expect("J >= 1");
        let norm = pooled.dot(&pooled).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Degenerate(
                "fused playlist representation has zero norm".into(),
            ));
        }
        Ok(FusionForward {
            out: pooled / norm,
            attention,
            x: x.clone(),
            q,
            k,
            v,
            norm,
        })
    }

    /// Accumulates gradients of `W_Q`, `W_K`, `W_V`; member rows are treated
    /// as constants.
    pub fn backward(&mut self, fwd: &FusionForward, grad_out: ArrayView1<f64>) {
        let (j, d) = fwd.x.dim();
        let y = &fwd.out;
        let dm = (&grad_out - &(y * y.dot(&grad_out))) / fwd.norm;
        let d_o = Matrix::from_shape_fn((j, d), |(_, c)| dm[c] / j as f64);
        let p = &fwd.attention;
        let dp = d_o.dot(&fwd.v.t());
        let dv = p.t().dot(&d_o);
        let row_dot = (&dp * p).sum_axis(Axis(1)).insert_axis(Axis(1));
        let ds = p * &(&dp - &row_dot);
        let scale = 1.0 / (d as f64).sqrt();
        let dq = ds.dot(&fwd.k) * scale;
        let dk = ds.t().dot(&fwd.q) * scale;
        self.w_q.grad += &dq.t().dot(&fwd.x);
        self.w_k.grad += &dk.t().dot(&fwd.x);
        self.w_v.grad += &dv.t().dot(&fwd.x);
    }
}

impl Parameterized for FusionParams {
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        vec![&mut self.w_q, &mut self.w_k, &mut self.w_v]
    }
}

/// Independent fusion weights for the audio and text member sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fusion {
    pub audio: FusionParams,
    pub text: FusionParams,
}

impl Fusion {
    pub fn init<R: Rng + ?Sized>(d: usize, std: f64, rng: &mut R) -> Self {
        Self {
            audio: FusionParams::init(d, std, rng),
            text: FusionParams::init(d, std, rng),
        }
    }
}

impl Parameterized for Fusion {
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut p = self.audio.params_mut();
        p.extend(self.text.params_mut());
        p
    }
}

pub fn fuse_playlist(params: &FusionParams, members: &Matrix) -> Result<Vector> {
    Ok(params.forward(members)?.out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{finite_diff_check, normalize_rows};
    use ndarray::{array, concatenate};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_rows(j: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        normalize_rows(random_normal_matrix(j, d, 1.0, &mut rng).view())
            .unwrap()
            .0
    }

    #[test]
    fn single_row_identity_passes_through() {
        let x = array![[0.6, 0.8, 0.0]];
        let out = fuse_playlist(&FusionParams::identity(3), &x).unwrap();
        assert!((out - x.row(0)).iter().all(|d| d.abs() < 1e-15));
    }

    #[test]
    fn duplicated_row_matches_single_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = FusionParams::init(4, 0.7, &mut rng);
        let x = unit_rows(1, 4, 9);
        let twice = concatenate![Axis(0), x, x];
        let a = fuse_playlist(&f, &x).unwrap();
        let b = fuse_playlist(&f, &twice).unwrap();
        assert!((a - b).iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn empty_member_set_is_an_error() {
        assert!(matches!(
            fuse_playlist(&FusionParams::identity(2), &Matrix::zeros((0, 2))),
            Err(Error::EmptyPlaylist(_))
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..4 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut f = FusionParams::init(5, 0.8, &mut rng);
            f.w_v.value = random_normal_matrix(5, 5, 0.8, &mut rng);
            let x = unit_rows(3, 5, seed + 100);
            let w = random_normal_matrix(1, 5, 1.0, &mut rng).row(0).to_owned();
            let report = finite_diff_check(
                &mut f,
                |f: &mut FusionParams| {
                    let fwd = f.forward(&x)?;
                    f.backward(&fwd, w.view());
                    Ok(fwd.out.dot(&w))
                },
                1e-5,
            )
            .unwrap();
            assert!(report.max_rel_error < 1e-6, "seed {seed}: {report:?}");
        }
    }

    proptest! {
        #[test]
        fn attention_rows_sum_to_one_and_order_is_irrelevant(seed in 0u64..300, j in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = FusionParams::init(4, 1.0, &mut rng);
            let x = unit_rows(j, 4, seed + 1);
            let fwd = f.forward(&x).unwrap();
            for row in fwd.attention.rows() {
                prop_assert!((row.sum() - 1.0).abs() < 1e-12);
            }
            let rev: Vec<usize> = (0..j).rev().collect();
            let out2 = fuse_playlist(&f, &x.select(Axis(0), &rev)).unwrap();
            prop_assert!((&fwd.out - &out2).iter().all(|d| d.abs() < 1e-12));
            prop_assert!((fwd.out.dot(&fwd.out) - 1.0).abs() < 1e-12);
        }
    }
}
