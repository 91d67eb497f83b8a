//! Weighted matrix factorization for implicit feedback, fitted by
//! alternating least squares.
//!
//! Objective over all playlist-track pairs:
//! `Σ c_ps (r_ps − z_p·z_s)² + λ(‖Z_P‖² + ‖Z_S‖²)` with `c_ps = 1 + α r_ps`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::InteractionGraph;
use crate::numkit::{random_normal_matrix, Matrix, Vector};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WmfConfig {
    pub k: usize,
    pub lambda: f64,
    pub alpha: f64,
    pub iters: usize,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for WmfConfig {
    fn default() -> Self {
        Self {
            k: 64,
            lambda: 0.1,
            alpha: 40.0,
            iters: 15,
            init_std: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WmfState {
    pub playlist_ids: Vec<String>,
    pub track_ids: Vec<String>,
    /// `M × k`
    pub zp: Matrix,
    /// `N × k`
    pub zs: Matrix,
    /// Objective at initialization and after every full sweep.
    pub objective_trace: Vec<f64>,
}

impl WmfState {
    pub fn score(&self, playlist: usize, track: usize) -> f64 {
        self.zp.row(playlist).dot(&self.zs.row(track))
    }
}

pub fn wmf_objective(
    graph: &InteractionGraph,
    zp: &Matrix,
    zs: &Matrix,
    lambda: f64,
    alpha: f64,
) -> f64 {
    // Σ_all x² = tr((Z_PᵀZ_P)(Z_SᵀZ_S)), then correct the observed entries.
    let gp = zp.t().dot(zp);
    let gs = zs.t().dot(zs);
    let mut total = (&gp * &gs).sum();
    for p in 0..graph.num_playlists() {
        for &s in graph.members(p) {
            let x = zp.row(p).dot(&zs.row(s));
            total += (1.0 + alpha) * (1.0 - x) * (1.0 - x) - x * x;
        }
    }
    total + lambda * (zp.iter().map(|v| v * v).sum::<f64>() + zs.iter().map(|v| v * v).sum::<f64>())
}

/// Exactly minimizes the objective over every row of `rows` with `other`
/// held fixed. `observed[r]` lists the columns of row `r` with `r = 1`.
fn solve_side(
    rows: &mut Matrix,
    other: &Matrix,
    observed: &dyn Fn(usize) -> Vec<usize>,
    lambda: f64,
    alpha: f64,
) -> Result<()> {
    let k = other.ncols();
    let to_na = |m: &Matrix| DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]]);
    let gram = to_na(&other.t().dot(other));
    for r in 0..rows.nrows() {
        let mut a = gram.clone();
        let mut b = DVector::zeros(k);
        for s in observed(r) {
            let z = DVector::from_iterator(k, other.row(s).iter().copied());
            a.ger(alpha, &z, &z, 1.0);
            b.axpy(1.0 + alpha, &z, 1.0);
        }
        for i in 0..k {
            a[(i, i)] += lambda;
        }
        let chol = a.cholesky().ok_or_else(|| {
            Error::Degenerate("ALS normal equations are not positive definite".into())
        })?;
        let x = chol.solve(&b);
        for (dst, v) in rows.row_mut(r).iter_mut().zip(x.iter()) {
            *dst = *v;
        }
    }
    Ok(())
}

pub fn wmf_fit(graph: &InteractionGraph, config: &WmfConfig) -> Result<WmfState> {
    if graph.num_playlists() == 0 || graph.num_tracks() == 0 {
        return Err(Error::EmptyCorpus(
            "WMF needs at least one playlist and one track".into(),
        ));
    }
    if config.k == 0 || !(config.lambda > 0.0) || !(config.alpha >= 0.0) {
        return Err(Error::Config(
            "WMF needs k > 0, lambda > 0 and alpha >= 0".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut zp = random_normal_matrix(graph.num_playlists(), config.k, config.init_std, &mut rng);
    let mut zs = random_normal_matrix(graph.num_tracks(), config.k, config.init_std, &mut rng);
    let mut trace = vec![wmf_objective(graph, &zp, &zs, config.lambda, config.alpha)];
    for _ in 0..config.iters {
        solve_side(
            &mut zp,
            &zs,
            &|p| graph.members(p).to_vec(),
            config.lambda,
            config.alpha,
        )?;
        solve_side(
            &mut zs,
            &zp,
            &|s| graph.parents(s).to_vec(),
            config.lambda,
            config.alpha,
        )?;
        trace.push(wmf_objective(graph, &zp, &zs, config.lambda, config.alpha));
    }
    if zp.iter().chain(zs.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("WMF factors".into()));
    }
    Ok(WmfState {
        playlist_ids: graph.playlist_ids().to_vec(),
        track_ids: graph.track_ids().to_vec(),
        zp,
        zs,
        objective_trace: trace,
    })
}

/// Column means of a factor matrix.
pub(crate) fn column_mean(m: &Matrix) -> Vector {
    m.mean_axis(ndarray::Axis(0))
        .unwrap_or_else(|| Vector::zeros(m.ncols()))
}
