//! Contrastive collaborative/content model: learned playlist and track
//! factors contrasted against each other, with track factors randomly
//! replaced by transformed content, plus a content-content contrast between
//! co-members.

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingTable, Recommender};
use crate::corpus::{derive_cooccurrence, InteractionGraph};
use crate::losses::{contrast, relational_targets, ContrastBatch};
use crate::numkit::{
    normalize, normalize_rows, normalize_rows_backward, random_normal_matrix, Activation, Adam,
    AdamConfig, Matrix, Mlp, ParamTensor, Parameterized, Vector,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClcrecConfig {
    pub k: usize,
    pub hidden: Vec<usize>,
    pub temperature: f64,
    pub replace_prob: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for ClcrecConfig {
    fn default() -> Self {
        Self {
            k: 64,
            hidden: vec![256],
            temperature: 2.0,
            replace_prob: 0.5,
            lr: 0.001,
            weight_decay: 0.1,
            steps: 1000,
            batch_size: 128,
            init_std: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClcrecState {
    /// Learned playlist embeddings, `M × k`.
    pub zp: ParamTensor,
    /// Learned track embeddings, `N × k`.
    pub zs: ParamTensor,
    /// Content transform `d_content → k`.
    pub f: Mlp,
    pub temperature: f64,
    pub loss_trace: Vec<f64>,
}

impl Parameterized for ClcrecState {
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut p = vec![&mut self.zp, &mut self.zs];
        p.extend(self.f.params_mut());
        p
    }
}

/// One minibatch of `(playlist, member i, co-member j)` triples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClcrecBatch {
    pub playlists: Vec<usize>,
    pub tracks_i: Vec<usize>,
    pub tracks_j: Vec<usize>,
    /// Whether track `i`'s factor is replaced by its transformed content.
    pub replace: Vec<bool>,
    /// `[b][c]`: track `i_c` belongs to playlist `p_b`.
    pub playlist_positive: Array2<bool>,
    /// `[b][c]`: tracks `i_b` and `j_c` co-occur.
    pub track_positive: Array2<bool>,
}

fn symmetric(
    anchors: &Matrix,
    others: &Matrix,
    mask: &Array2<bool>,
    tau: f64,
) -> Result<(f64, Matrix, Matrix)> {
    let (m1, m2) = relational_targets(mask, 0)?;
    let d = anchors.ncols();
    let batch = ContrastBatch {
        anchors_a: anchors.clone(),
        positives_t: others.clone(),
        anchors_t: others.clone(),
        positives_a: anchors.clone(),
        negatives_a: Matrix::zeros((0, d)),
        negatives_t: Matrix::zeros((0, d)),
        targets_a2t: m1,
        targets_t2a: m2,
    };
    let (loss, g) = contrast(&batch, tau)?;
    Ok((
        loss,
        g.anchors_a + g.positives_a,
        g.anchors_t + g.positives_t,
    ))
}

fn scatter_add(grad: &mut Matrix, rows: &[usize], g: &Matrix) {
    for (&r, gr) in rows.iter().zip(g.rows()) {
        let mut dst = grad.row_mut(r);
        dst += &gr;
    }
}

fn batch_terms(
    state: &mut ClcrecState,
    content: &Matrix,
    batch: &ClcrecBatch,
    tau: f64,
    sim_scale: f64,
    with_second: bool,
) -> Result<f64> {
    let b = batch.playlists.len();
    if b == 0 {
        return Err(Error::Domain("empty CLCRec batch".into()));
    }
    // one content pass over [e_i; e_j]
    let idx: Vec<usize> = batch
        .tracks_i
        .iter()
        .chain(&batch.tracks_j)
        .copied()
        .collect();
    let (raw_f, cache) = state.f.forward_cached(&content.select(Axis(0), &idx))?;
    let (fe, fe_norms) = normalize_rows(raw_f.view())?;
    let (u, u_norms) = normalize_rows(state.zp.value.select(Axis(0), &batch.playlists).view())?;
    let (zs, zs_norms) = normalize_rows(state.zs.value.select(Axis(0), &batch.tracks_i).view())?;

    let mut v = zs.clone();
    for (c, &rep) in batch.replace.iter().enumerate() {
        if rep {
            v.row_mut(c).assign(&fe.row(c));
        }
    }
    let (l1, gu, gv) = symmetric(&(&u * sim_scale), &v, &batch.playlist_positive, tau)?;
    let gu = gu * sim_scale;

    let mut g_fe = Matrix::zeros(fe.dim());
    let mut g_zs = Matrix::zeros(zs.dim());
    for (c, &rep) in batch.replace.iter().enumerate() {
        if rep {
            g_fe.row_mut(c).assign(&gv.row(c));
        } else {
            g_zs.row_mut(c).assign(&gv.row(c));
        }
    }
    let mut loss = l1;
    if with_second {
        let fi = fe.slice(ndarray::s![..b, ..]).to_owned();
        let fj = fe.slice(ndarray::s![b.., ..]).to_owned();
        let (l2, gi, gj) = symmetric(&(&fi * sim_scale), &fj, &batch.track_positive, tau)?;
        loss += l2;
        let mut top = g_fe.slice_mut(ndarray::s![..b, ..]);
        top += &(gi * sim_scale);
        let mut bottom = g_fe.slice_mut(ndarray::s![b.., ..]);
        bottom += &gj;
    }

    let g_u_raw = normalize_rows_backward(&u, &u_norms, &gu);
    scatter_add(&mut state.zp.grad, &batch.playlists, &g_u_raw);
    let g_zs_raw = normalize_rows_backward(&zs, &zs_norms, &g_zs);
    scatter_add(&mut state.zs.grad, &batch.tracks_i, &g_zs_raw);
    let g_f_raw = normalize_rows_backward(&fe, &fe_norms, &g_fe);
    state.f.backward(&cache, &g_f_raw);
    Ok(loss)
}

/// `Contrast(z_p, z̃_{s_i}) + Contrast(f(e_{s_i}), f(e_{s_j}))` on one batch,
/// where `z̃` is either the learned factor or the transformed content.
/// Anchor rows are multiplied by `sim_scale` before the temperature is
/// applied. Accumulates gradients into `state`.
pub fn clcrec_batch_loss(
    state: &mut ClcrecState,
    content: &Matrix,
    batch: &ClcrecBatch,
    temperature: f64,
    sim_scale: f64,
) -> Result<f64> {
    batch_terms(state, content, batch, temperature, sim_scale, true)
}

/// `track_content` must contain a row for every track of `graph`.
pub fn clcrec_fit(
    graph: &InteractionGraph,
    track_content: &EmbeddingTable,
    config: &ClcrecConfig,
) -> Result<ClcrecState> {
    if !(0.0..=1.0).contains(&config.replace_prob) {
        return Err(Error::Config(format!(
            "replace_prob {} outside [0, 1]",
            config.replace_prob
        )));
    }
    if !(config.temperature > 0.0) {
        return Err(Error::Config("CLCRec temperature must be positive".into()));
    }
    let content = track_content
        .subset(graph.track_ids())
        .map_err(|e| Error::Config(format!("track content incomplete: {e}")))?;
    let edges: Vec<(usize, usize)> = (0..graph.num_playlists())
        .flat_map(|p| graph.members(p).iter().map(move |&s| (p, s)))
        .collect();
    if edges.is_empty() {
        return Err(Error::EmptyCorpus(
            "CLCRec needs at least one interaction".into(),
        ));
    }
    let cooc = derive_cooccurrence(graph);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dims: Vec<usize> = std::iter::once(content.dim())
        .chain(config.hidden.iter().copied())
        .chain(std::iter::once(config.k))
        .collect();
    let mut state = ClcrecState {
        zp: ParamTensor::new(random_normal_matrix(
            graph.num_playlists(),
            config.k,
            config.init_std,
            &mut rng,
        )),
        zs: ParamTensor::new(random_normal_matrix(
            graph.num_tracks(),
            config.k,
            config.init_std,
            &mut rng,
        )),
        f: Mlp::random(&dims, Activation::Tanh, &mut rng)?,
        temperature: config.temperature,
        loss_trace: Vec::with_capacity(config.steps),
    };
    let mut adam = Adam::new(AdamConfig {
        weight_decay: config.weight_decay,
        ..AdamConfig::default()
    });
    let b = config.batch_size.max(1);
    for _ in 0..config.steps {
        let mut batch = ClcrecBatch {
            playlists: Vec::with_capacity(b),
            tracks_i: Vec::with_capacity(b),
            tracks_j: Vec::with_capacity(b),
            replace: Vec::with_capacity(b),
            playlist_positive: Array2::from_elem((b, b), false),
            track_positive: Array2::from_elem((b, b), false),
        };
        for _ in 0..b {
            let &(p, i) = edges.choose(&mut rng).expect("non-empty");
            let others: Vec<usize> = graph
                .members(p)
                .iter()
                .copied()
                .filter(|&s| s != i)
                .collect();
            let j = others.choose(&mut rng).copied().unwrap_or(i);
            batch.playlists.push(p);
            batch.tracks_i.push(i);
            batch.tracks_j.push(j);
            batch
                .replace
                .push(rng.random::<f64>() < config.replace_prob);
        }
        for r in 0..b {
            for c in 0..b {
                batch.playlist_positive[[r, c]] =
                    graph.contains(batch.playlists[r], batch.tracks_i[c]);
                let (i, j) = (batch.tracks_i[r], batch.tracks_j[c]);
                batch.track_positive[[r, c]] = i == j || cooc.contains(i, j);
            }
        }
        state.zero_grad();
        let loss = clcrec_batch_loss(
            &mut state,
            content.vectors(),
            &batch,
            config.temperature,
            1.0,
        )?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("CLCRec loss".into()));
        }
        state.loss_trace.push(loss);
        adam.step(&mut state, config.lr);
    }
    Ok(state)
}

impl Recommender for ClcrecState {
    fn name(&self) -> &str {
        "clcrec"
    }

    fn query_vector(&self, pooled: ArrayView1<f64>) -> Result<Vector> {
        let x = pooled.to_owned().insert_axis(Axis(0));
        normalize(self.f.forward(&x)?.row(0))
    }

    fn candidate_matrix(&self, candidates: &EmbeddingTable) -> Result<Matrix> {
        Ok(normalize_rows(self.f.forward(candidates.vectors())?.view())?.0)
    }
}
