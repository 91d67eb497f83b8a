//! Content-to-preference transforms trained to reproduce WMF scores, with
//! input dropout on the collaborative half so the content pathway alone is
//! usable for cold tracks.

use ndarray::{concatenate, s, ArrayView1, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::wmf::{column_mean, WmfState};
use super::{pool_playlist, EmbeddingTable, Recommender};
use crate::corpus::Pool;
use crate::numkit::{Activation, Matrix, Mlp, ParamTensor, Parameterized, SgdMomentum, Vector};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DropoutNetConfig {
    pub hidden: Vec<usize>,
    pub out_dim: usize,
    pub dropout: f64,
    pub lr: f64,
    pub momentum: f64,
    pub l2: f64,
    pub steps: usize,
    pub batch_playlists: usize,
    pub batch_tracks: usize,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for DropoutNetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![256, 256],
            out_dim: 256,
            dropout: 0.2,
            lr: 0.005,
            momentum: 0.9,
            l2: 0.1,
            steps: 1000,
            batch_playlists: 32,
            batch_tracks: 64,
            activation: Activation::Tanh,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropoutNetState {
    pub f_p: Mlp,
    pub f_s: Mlp,
    /// Mean playlist factor, substituted for `z_p` at test time.
    pub zp_mean: Vector,
    /// Mean track factor, substituted for `z_s` at test time.
    pub zs_mean: Vector,
    pub content_dim: usize,
    pub loss_trace: Vec<f64>,
}

impl Parameterized for DropoutNetState {
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut p = self.f_p.params_mut();
        p.extend(self.f_s.params_mut());
        p
    }
}

/// One minibatch: concatenated `[content ‖ factor]` inputs and the WMF
/// scores to regress onto.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutNetBatch {
    pub playlist_in: Matrix,
    pub track_in: Matrix,
    /// `playlists × tracks`
    pub target: Matrix,
}

/// Mean squared error between `f_p(·) f_s(·)ᵀ` and the targets; accumulates
/// gradients into both transforms.
pub fn dropoutnet_batch_loss(state: &mut DropoutNetState, batch: &DropoutNetBatch) -> Result<f64> {
    let (up, cp) = state.f_p.forward_cached(&batch.playlist_in)?;
    let (us, cs) = state.f_s.forward_cached(&batch.track_in)?;
    let pred = up.dot(&us.t());
    if pred.dim() != batch.target.dim() {
        return Err(Error::Shape("target shape does not match the batch".into()));
    }
    let diff = pred - &batch.target;
    let n = diff.len() as f64;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    let g = diff * (2.0 / n);
    let gp = g.dot(&us);
    let gs = g.t().dot(&up);
    state.f_p.backward(&cp, &gp);
    state.f_s.backward(&cs, &gs);
    Ok(loss)
}

/// Pooled content of every playlist in `pool`, one row per playlist.
pub fn playlist_content(table: &EmbeddingTable, pool: &Pool) -> Result<Matrix> {
    let mut out = Matrix::zeros((pool.playlists().len(), table.dim()));
    for (mut row, p) in out.rows_mut().into_iter().zip(pool.playlists()) {
        row.assign(&pool_playlist(table, &p.track_ids)?);
    }
    Ok(out)
}

fn inputs(content: &Matrix, factors: &Matrix, rows: &[usize], drop: &[bool]) -> Matrix {
    let mut x = concatenate![
        Axis(1),
        content.select(Axis(0), rows),
        factors.select(Axis(0), rows)
    ];
    let dc = content.ncols();
    for (mut r, &d) in x.rows_mut().into_iter().zip(drop) {
        if d {
            r.slice_mut(s![dc..]).fill(0.0);
        }
    }
    x
}

fn transform(
    dims: &[usize],
    content_dim: usize,
    act: Activation,
    rng: &mut ChaCha8Rng,
) -> Result<Mlp> {
    let mut mlp = Mlp::random(dims, act, rng)?;
    // collaborative inputs start disconnected; full dropout keeps them so
    mlp.layers[0]
        .weight
        .value
        .slice_mut(s![.., content_dim..])
        .fill(0.0);
    Ok(mlp)
}

/// `track_content` must cover every track the WMF model was fitted on;
/// `playlist_content` has one row per WMF playlist.
pub fn dropoutnet_fit(
    wmf: &WmfState,
    track_content: &EmbeddingTable,
    playlist_content: &Matrix,
    config: &DropoutNetConfig,
) -> Result<DropoutNetState> {
    if !(0.0..=1.0).contains(&config.dropout) {
        return Err(Error::Config(format!(
            "dropout {} outside [0, 1]",
            config.dropout
        )));
    }
    let dc = track_content.dim();
    if playlist_content.ncols() != dc || playlist_content.nrows() != wmf.zp.nrows() {
        return Err(Error::Config(
            "playlist content does not match the WMF playlists or track content width".into(),
        ));
    }
    let tracks = track_content
        .subset(&wmf.track_ids)
        .map_err(|e| Error::Config(format!("track content incomplete: {e}")))?;
    let k = wmf.zp.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dims: Vec<usize> = std::iter::once(dc + k)
        .chain(config.hidden.iter().copied())
        .chain(std::iter::once(config.out_dim))
        .collect();
    let mut state = DropoutNetState {
        f_p: transform(&dims, dc, config.activation, &mut rng)?,
        f_s: transform(&dims, dc, config.activation, &mut rng)?,
        zp_mean: column_mean(&wmf.zp),
        zs_mean: column_mean(&wmf.zs),
        content_dim: dc,
        loss_trace: Vec::with_capacity(config.steps),
    };
    let m = wmf.zp.nrows();
    let n = wmf.zs.nrows();
    let bp = config.batch_playlists.clamp(1, m);
    let bs = config.batch_tracks.clamp(1, n);
    let mut opt = SgdMomentum::new(config.momentum, config.l2);
    for _ in 0..config.steps {
        let prow = sample(&mut rng, m, bp).into_vec();
        let srow = sample(&mut rng, n, bs).into_vec();
        let pdrop: Vec<bool> = (0..bp)
            .map(|_| rng.random::<f64>() < config.dropout)
            .collect();
        let sdrop: Vec<bool> = (0..bs)
            .map(|_| rng.random::<f64>() < config.dropout)
            .collect();
        let batch = DropoutNetBatch {
            playlist_in: inputs(playlist_content, &wmf.zp, &prow, &pdrop),
            track_in: inputs(tracks.vectors(), &wmf.zs, &srow, &sdrop),
            target: wmf
                .zp
                .select(Axis(0), &prow)
                .dot(&wmf.zs.select(Axis(0), &srow).t()),
        };
        state.zero_grad();
        let loss = dropoutnet_batch_loss(&mut state, &batch)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("DropoutNet loss".into()));
        }
        state.loss_trace.push(loss);
        opt.step(&mut state, config.lr);
    }
    Ok(state)
}

impl Recommender for DropoutNetState {
    fn name(&self) -> &str {
        "dropoutnet"
    }

    fn query_vector(&self, pooled: ArrayView1<f64>) -> Result<Vector> {
        if pooled.len() != self.content_dim {
            return Err(Error::Shape(format!(
                "query content width {} (expected {})",
                pooled.len(),
                self.content_dim
            )));
        }
        let x = concatenate![Axis(0), pooled, self.zp_mean.view()].insert_axis(Axis(0));
        Ok(self.f_p.forward(&x)?.row(0).to_owned())
    }

    fn candidate_matrix(&self, candidates: &EmbeddingTable) -> Result<Matrix> {
        if candidates.dim() != self.content_dim {
            return Err(Error::Shape(format!(
                "candidate content width {} (expected {})",
                candidates.dim(),
                self.content_dim
            )));
        }
        let z = self
            .zs_mean
            .view()
            .insert_axis(Axis(0))
            .broadcast((candidates.len(), self.zs_mean.len()))
            .expect("broadcast row")
            .to_owned();
        self.f_s
            .forward(&concatenate![Axis(1), *candidates.vectors(), z])
    }
}
