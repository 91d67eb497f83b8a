//! Within-track, track-track and track-playlist contrastive losses.
//!
//! The embedding-level functions return gradients with respect to their
//! inputs; the `*_loss` functions run the encoder forward, evaluate the loss
//! and accumulate parameter gradients.

use ndarray::{Array2, Axis};

use super::contrast::{contrast, diagonal_targets, ContrastBatch};
use super::fusion::{Fusion, FusionForward};
use crate::corpus::{CooccurrenceGraph, InteractionGraph};
use crate::encoder::{EncoderState, Modality};
use crate::numkit::Matrix;
use crate::{Error, Result};

/// Queue negatives for one step; constants as far as gradients go.
#[derive(Debug, Clone, PartialEq)]
pub struct Negatives {
    pub audio: Matrix,
    pub text: Matrix,
}

impl Negatives {
    pub fn none(dim: usize) -> Self {
        Self {
            audio: Matrix::zeros((0, dim)),
            text: Matrix::zeros((0, dim)),
        }
    }

    pub fn len(&self) -> usize {
        self.audio.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.audio.nrows() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGrads {
    pub audio: Matrix,
    pub text: Matrix,
}

/// Gradients of a two-sided relational contrast; `x` is the anchor side
/// (track `i` or playlist `k`), `y` the partner track side.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationalGrads {
    pub x_audio: Matrix,
    pub x_text: Matrix,
    pub y_audio: Matrix,
    pub y_text: Matrix,
}

/// Row-normalized positive masks for both orientations, padded with `q`
/// zero columns. The diagonal is always positive.
pub fn relational_targets(positive: &Array2<bool>, q: usize) -> Result<(Matrix, Matrix)> {
    let b = positive.nrows();
    if positive.ncols() != b {
        return Err(Error::Shape("positive mask must be square".into()));
    }
    let build = |get: &dyn Fn(usize, usize) -> bool| {
        let mut y = Matrix::zeros((b, b + q));
        for r in 0..b {
            let mut count = 0.0;
            for c in 0..b {
                if r == c || get(r, c) {
                    y[[r, c]] = 1.0;
                    count += 1.0;
                }
            }
            y.row_mut(r).mapv_inplace(|v| v / count);
        }
        y
    };
    Ok((
        build(&|r, c| positive[[r, c]]),
        build(&|r, c| positive[[c, r]]),
    ))
}

/// Contrast of a track batch against itself across modalities, with one-hot
/// diagonal targets.
pub fn wtc_embeddings(
    audio: &Matrix,
    text: &Matrix,
    neg: &Negatives,
    tau: f64,
) -> Result<(f64, PairGrads)> {
    let y = diagonal_targets(audio.nrows(), neg.len());
    let batch = ContrastBatch {
        anchors_a: audio.clone(),
        anchors_t: text.clone(),
        positives_a: audio.clone(),
        positives_t: text.clone(),
        negatives_a: neg.audio.clone(),
        negatives_t: neg.text.clone(),
        targets_a2t: y.clone(),
        targets_t2a: y,
    };
    let (loss, g) = contrast(&batch, tau)?;
    Ok((
        loss,
        PairGrads {
            audio: g.anchors_a + g.positives_a,
            text: g.anchors_t + g.positives_t,
        },
    ))
}

/// `½ [Contrast(x_a, y_t) + Contrast(x_t, y_a)]`, covering the four directed
/// similarity terms between anchor side `x` and partner side `y`.
/// `positive[b][c]` marks whether `y_c` is a relational positive of `x_b`.
pub fn relational_contrast(
    x_audio: &Matrix,
    x_text: &Matrix,
    y_audio: &Matrix,
    y_text: &Matrix,
    positive: &Array2<bool>,
    neg: &Negatives,
    tau: f64,
) -> Result<(f64, RelationalGrads)> {
    let (m1, m2) = relational_targets(positive, neg.len())?;
    let first = ContrastBatch {
        anchors_a: x_audio.clone(),
        positives_t: y_text.clone(),
        anchors_t: y_text.clone(),
        positives_a: x_audio.clone(),
        negatives_a: neg.audio.clone(),
        negatives_t: neg.text.clone(),
        targets_a2t: m1.clone(),
        targets_t2a: m2.clone(),
    };
    let second = ContrastBatch {
        anchors_t: x_text.clone(),
        positives_a: y_audio.clone(),
        anchors_a: y_audio.clone(),
        positives_t: x_text.clone(),
        negatives_a: neg.audio.clone(),
        negatives_t: neg.text.clone(),
        targets_t2a: m1,
        targets_a2t: m2,
    };
    let (l1, g1) = contrast(&first, tau)?;
    let (l2, g2) = contrast(&second, tau)?;
    let grads = RelationalGrads {
        x_audio: (g1.anchors_a + g1.positives_a) * 0.5,
        y_text: (g1.anchors_t + g1.positives_t) * 0.5,
        x_text: (g2.anchors_t + g2.positives_t) * 0.5,
        y_audio: (g2.anchors_a + g2.positives_a) * 0.5,
    };
    Ok((0.5 * (l1 + l2), grads))
}

/// Trainable encoder outputs produced while evaluating a loss, one row per
/// entry of `indices`. Used to refresh the lookup tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub indices: Vec<usize>,
    pub audio: Matrix,
    pub text: Matrix,
}

impl Encoded {
    fn empty(dim: usize) -> Self {
        Self {
            indices: Vec::new(),
            audio: Matrix::zeros((0, dim)),
            text: Matrix::zeros((0, dim)),
        }
    }
}

/// Raw features of a track pool, one row per track.
#[derive(Debug, Clone, Copy)]
pub struct Features<'a> {
    pub audio: &'a Matrix,
    pub text: &'a Matrix,
}

struct Pass {
    audio: crate::encoder::BranchForward,
    text: crate::encoder::BranchForward,
}

fn forward(enc: &EncoderState, feats: Features<'_>, idx: &[usize]) -> Result<Pass> {
    Ok(Pass {
        audio: enc.forward(Modality::Audio, &feats.audio.select(Axis(0), idx))?,
        text: enc.forward(Modality::Text, &feats.text.select(Axis(0), idx))?,
    })
}

fn backward(enc: &mut EncoderState, pass: &Pass, ga: &Matrix, gt: &Matrix) {
    enc.backward(Modality::Audio, &pass.audio, ga);
    enc.backward(Modality::Text, &pass.text, gt);
}

pub fn wtc_loss(
    enc: &mut EncoderState,
    feats: Features<'_>,
    batch: &[usize],
    neg: &Negatives,
    tau: f64,
) -> Result<(f64, Encoded)> {
    let pass = forward(enc, feats, batch)?;
    let (loss, g) = wtc_embeddings(&pass.audio.out, &pass.text.out, neg, tau)?;
    backward(enc, &pass, &g.audio, &g.text);
    Ok((
        loss,
        Encoded {
            indices: batch.to_vec(),
            audio: pass.audio.out,
            text: pass.text.out,
        },
    ))
}

/// Track-track loss over co-occurring pairs `(i, j)`. The returned
/// encodings list anchors first, then partners.
pub fn ttc_loss(
    enc: &mut EncoderState,
    feats: Features<'_>,
    cooccurrence: &CooccurrenceGraph,
    pairs: &[(usize, usize)],
    neg: &Negatives,
    tau: f64,
) -> Result<(f64, Encoded)> {
    if let Some(&(i, j)) = pairs.iter().find(|(i, j)| !cooccurrence.contains(*i, *j)) {
        return Err(Error::Contract(format!(
            "tracks {i} and {j} do not co-occur"
        )));
    }
    let left: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let right: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let b = pairs.len();
    let positive = Array2::from_shape_fn((b, b), |(r, c)| cooccurrence.contains(left[r], right[c]));
    let pi = forward(enc, feats, &left)?;
    let pj = forward(enc, feats, &right)?;
    let (loss, g) = relational_contrast(
        &pi.audio.out,
        &pi.text.out,
        &pj.audio.out,
        &pj.text.out,
        &positive,
        neg,
        tau,
    )?;
    backward(enc, &pi, &g.x_audio, &g.x_text);
    backward(enc, &pj, &g.y_audio, &g.y_text);
    let encoded = Encoded {
        indices: left.into_iter().chain(right).collect(),
        audio: ndarray::concatenate![Axis(0), pi.audio.out, pj.audio.out],
        text: ndarray::concatenate![Axis(0), pi.text.out, pj.text.out],
    };
    Ok((loss, encoded))
}

/// One track-playlist training example: anchor `track` drawn from
/// `playlist`, with `context` the sampled other members whose table rows
/// feed the playlist encoder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TpcSample {
    pub playlist: usize,
    pub track: usize,
    pub context: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TpcOutcome {
    pub loss: f64,
    pub used: usize,
    /// Samples dropped because every context row was cold.
    pub skipped: usize,
    pub encoded: Encoded,
}

enum Pooled {
    Attention(FusionForward),
    Mean,
}

fn pool_members(
    fusion: Option<&Fusion>,
    modality: Modality,
    rows: &Matrix,
) -> Result<(ndarray::Array1<f64>, Pooled)> {
    match fusion {
        Some(f) => {
            let params = match modality {
                Modality::Audio => &f.audio,
                Modality::Text => &f.text,
            };
            let fwd = params.forward(rows)?;
            Ok((fwd.out.clone(), Pooled::Attention(fwd)))
        }
        None => {
            let mean = rows
                .mean_axis(Axis(0))
                .ok_or_else(|| Error::EmptyPlaylist("no context rows".into()))?;
            let n = mean.dot(&mean).sqrt();
            if !(n > 0.0) {
                return Err(Error::Degenerate("mean of context rows is zero".into()));
            }
            Ok((mean / n, Pooled::Mean))
        }
    }
}

/// Track-playlist loss. Playlist representations come from the lookup
/// tables (anchor and cold rows excluded) pooled by `fusion`, or by a
/// normalized mean when `fusion` is `None`.
pub fn tpc_loss(
    enc: &mut EncoderState,
    fusion: Option<&mut Fusion>,
    feats: Features<'_>,
    graph: &InteractionGraph,
    samples: &[TpcSample],
    neg: &Negatives,
    tau: f64,
) -> Result<TpcOutcome> {
    let d = enc.config().d_embed;
    let mut kept = Vec::new();
    let mut ctx_rows = Vec::new();
    let mut skipped = 0;
    for s in samples {
        if !graph.contains(s.playlist, s.track) {
            return Err(Error::Contract(format!(
                "track {} is not a member of playlist {}",
                s.track, s.playlist
            )));
        }
        let rows: Vec<usize> = s
            .context
            .iter()
            .copied()
            .filter(|&r| r != s.track && !enc.tables().is_cold(r))
            .collect();
        if rows.is_empty() {
            skipped += 1;
        } else {
            kept.push(s);
            ctx_rows.push(rows);
        }
    }
    let b = kept.len();
    if b == 0 {
        return Ok(TpcOutcome {
            loss: 0.0,
            used: 0,
            skipped,
            encoded: Encoded::empty(d),
        });
    }

    let mut p_audio = Matrix::zeros((b, d));
    let mut p_text = Matrix::zeros((b, d));
    let mut pooled = Vec::with_capacity(b);
    for (r, rows) in ctx_rows.iter().enumerate() {
        let ctx = enc.tables().lookup_rows(rows);
        let (va, fa) = pool_members(fusion.as_deref(), Modality::Audio, &ctx.audio)?;
        let (vt, ft) = pool_members(fusion.as_deref(), Modality::Text, &ctx.text)?;
        p_audio.row_mut(r).assign(&va);
        p_text.row_mut(r).assign(&vt);
        pooled.push((fa, ft));
    }

    let tracks: Vec<usize> = kept.iter().map(|s| s.track).collect();
    let positive =
        Array2::from_shape_fn((b, b), |(r, c)| graph.contains(kept[r].playlist, tracks[c]));
    let pass = forward(enc, feats, &tracks)?;
    let (loss, g) = relational_contrast(
        &p_audio,
        &p_text,
        &pass.audio.out,
        &pass.text.out,
        &positive,
        neg,
        tau,
    )?;
    backward(enc, &pass, &g.y_audio, &g.y_text);
    if let Some(f) = fusion {
        for (r, (fa, ft)) in pooled.iter().enumerate() {
            if let Pooled::Attention(fwd) = fa {
                f.audio.backward(fwd, g.x_audio.row(r));
            }
            if let Pooled::Attention(fwd) = ft {
                f.text.backward(fwd, g.x_text.row(r));
            }
        }
    }
    Ok(TpcOutcome {
        loss,
        used: b,
        skipped,
        encoded: Encoded {
            indices: tracks,
            audio: pass.audio.out,
            text: pass.text.out,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::derive_cooccurrence;
    use crate::encoder::EncoderConfig;
    use crate::numkit::{
        finite_diff_check, normalize_rows, random_normal_matrix, Activation, Linear, Mlp,
        ParamTensor, Parameterized,
    };
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const HAND: f64 = 0.31326168751822286;

    fn unit(rows: usize, d: usize, rng: &mut ChaCha8Rng) -> Matrix {
        normalize_rows(random_normal_matrix(rows, d, 1.0, rng).view())
            .unwrap()
            .0
    }

    fn random_negatives(q: usize, d: usize, rng: &mut ChaCha8Rng) -> Negatives {
        Negatives {
            audio: unit(q, d, rng),
            text: unit(q, d, rng),
        }
    }

    /// Graph: p0 = {0,1,2}, p1 = {2,3}, p2 = {4,5}, p3 = {5,0}.
    fn graph() -> InteractionGraph {
        let ids: Vec<String> = (0..6).map(|i| format!("s{i}")).collect();
        let pl =
            |p: &str, m: &[usize]| (p.to_string(), m.iter().map(|&i| format!("s{i}")).collect());
        InteractionGraph::new(
            ids,
            &[
                pl("p0", &[0, 1, 2]),
                pl("p1", &[2, 3]),
                pl("p2", &[4, 5]),
                pl("p3", &[5, 0]),
            ],
        )
        .unwrap()
    }

    fn encoder(seed: u64) -> (EncoderState, Matrix, Matrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = EncoderConfig {
            d_audio: 4,
            d_text: 3,
            hidden: vec![5],
            d_embed: 6,
            queue_capacity: 16,
            ..EncoderConfig::default()
        };
        let ids = (0..6).map(|i| format!("s{i}")).collect();
        let enc = EncoderState::new(cfg, ids, &mut rng).unwrap();
        let fa = random_normal_matrix(6, 4, 1.0, &mut rng);
        let ft = random_normal_matrix(6, 3, 1.0, &mut rng);
        (enc, fa, ft)
    }

    #[test]
    fn wtc_aligned_encoder_at_low_temperature_is_near_zero() {
        let e = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let (loss, _) = wtc_embeddings(&e, &e, &Negatives::none(3), 0.01).unwrap();
        assert!(loss < 1e-30);
    }

    #[test]
    fn wtc_single_track_without_queue_is_zero() {
        let e = array![[0.6, 0.8]];
        let (loss, g) = wtc_embeddings(&e, &array![[1.0, 0.0]], &Negatives::none(2), 0.07).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.audio.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn wtc_random_embeddings_near_uniform_baseline() {
        let mut total = 0.0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (l, _) = wtc_embeddings(
                &unit(4, 64, &mut rng),
                &unit(4, 64, &mut rng),
                &Negatives::none(64),
                1.0,
            )
            .unwrap();
            total += l;
        }
        assert!(
            (total / 100.0 - 4f64.ln()).abs() < 0.05,
            "{}",
            total / 100.0
        );
    }

    #[test]
    fn relational_hand_value_and_collapse() {
        let e = array![[1.0, 0.0], [0.0, 1.0]];
        let diag = Array2::from_shape_fn((2, 2), |(r, c)| r == c);
        let (loss, _) =
            relational_contrast(&e, &e, &e, &e, &diag, &Negatives::none(2), 1.0).unwrap();
        assert!((loss - HAND).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = unit(3, 5, &mut rng);
        let t = unit(3, 5, &mut rng);
        let neg = random_negatives(2, 5, &mut rng);
        let diag = Array2::from_shape_fn((3, 3), |(r, c)| r == c);
        let (rel, _) = relational_contrast(&a, &t, &a, &t, &diag, &neg, 0.3).unwrap();
        let (wtc, _) = wtc_embeddings(&a, &t, &neg, 0.3).unwrap();
        assert!((rel - wtc).abs() < 1e-12);
    }

    #[test]
    fn targets_spread_mass_over_positives() {
        let mask = array![[true, true], [false, true]];
        let (m1, m2) = relational_targets(&mask, 1).unwrap();
        assert_eq!(m1, array![[0.5, 0.5, 0.0], [0.0, 1.0, 0.0]]);
        assert_eq!(m2, array![[1.0, 0.0, 0.0], [0.5, 0.5, 0.0]]);
    }

    #[test]
    fn relational_embedding_gradients() {
        for seed in 0..4 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b = 4;
            let mask =
                Array2::from_shape_fn((b, b), |(r, c)| r == c || (r + c + seed as usize) % 3 == 0);
            let neg = random_negatives(3, 6, &mut rng);
            let mut p: Vec<ParamTensor> = (0..4)
                .map(|_| ParamTensor::new(unit(b, 6, &mut rng)))
                .collect();
            let report = finite_diff_check(
                &mut p,
                |p: &mut Vec<ParamTensor>| {
                    let (l, g) = relational_contrast(
                        &p[0].value,
                        &p[1].value,
                        &p[2].value,
                        &p[3].value,
                        &mask,
                        &neg,
                        0.4,
                    )?;
                    p[0].grad += &g.x_audio;
                    p[1].grad += &g.x_text;
                    p[2].grad += &g.y_audio;
                    p[3].grad += &g.y_text;
                    Ok(l)
                },
                1e-5,
            )
            .unwrap();
            assert!(report.max_rel_error < 1e-6, "{report:?}");
        }
    }

    #[test]
    fn ttc_rejects_non_cooccurring_pair() {
        let (mut enc, fa, ft) = encoder(1);
        let o = derive_cooccurrence(&graph());
        let feats = Features {
            audio: &fa,
            text: &ft,
        };
        let err = ttc_loss(&mut enc, feats, &o, &[(0, 4)], &Negatives::none(6), 0.1).unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn encoder_level_gradients_for_every_stage() {
        let (mut enc, fa, ft) = encoder(2);
        let g = graph();
        let o = derive_cooccurrence(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let neg = random_negatives(2, 6, &mut rng);
        for r in 0..6 {
            let a = unit(1, 6, &mut rng);
            let t = unit(1, 6, &mut rng);
            enc.table_update_row(r, a.row(0), t.row(0)).unwrap();
        }
        let fusion = Fusion::init(6, 0.8, &mut rng);
        let feats = Features {
            audio: &fa,
            text: &ft,
        };
        let samples = vec![
            TpcSample {
                playlist: 0,
                track: 0,
                context: vec![1, 2],
            },
            TpcSample {
                playlist: 1,
                track: 3,
                context: vec![2],
            },
            TpcSample {
                playlist: 3,
                track: 5,
                context: vec![0],
            },
        ];
        let mut model = (enc, fusion);
        let report = finite_diff_check(
            &mut model,
            |m: &mut (EncoderState, Fusion)| {
                let (w, _) = wtc_loss(&mut m.0, feats, &[0, 2, 4], &neg, 0.3)?;
                let (t, _) = ttc_loss(&mut m.0, feats, &o, &[(0, 1), (2, 3), (5, 4)], &neg, 0.3)?;
                let p = tpc_loss(&mut m.0, Some(&mut m.1), feats, &g, &samples, &neg, 0.3)?;
                Ok(w + t + p.loss)
            },
            1e-5,
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{report:?}");
        assert!(report.checked > 100);
    }

    #[test]
    fn stage_two_gradient_is_sum_of_parts() {
        let (enc, fa, ft) = encoder(3);
        let o = derive_cooccurrence(&graph());
        let feats = Features {
            audio: &fa,
            text: &ft,
        };
        let neg = Negatives::none(6);
        let grads = |which: u8| {
            let mut e = enc.clone();
            e.zero_grad();
            if which & 1 != 0 {
                wtc_loss(&mut e, feats, &[0, 3], &neg, 0.5).unwrap();
            }
            if which & 2 != 0 {
                ttc_loss(&mut e, feats, &o, &[(0, 2), (3, 2)], &neg, 0.5).unwrap();
            }
            e.params_mut()
                .into_iter()
                .map(|p| p.grad.clone())
                .collect::<Vec<_>>()
        };
        let (w, t, both) = (grads(1), grads(2), grads(3));
        for ((a, b), c) in w.iter().zip(&t).zip(&both) {
            assert!((a + b - c).iter().all(|d| d.abs() < 1e-12));
        }
    }

    #[test]
    fn tpc_collapses_to_wtc_on_pure_playlists() {
        let cfg = EncoderConfig {
            d_audio: 2,
            d_text: 2,
            hidden: vec![],
            d_embed: 2,
            queue_capacity: 4,
            ..EncoderConfig::default()
        };
        let id = || Mlp::from_layers(vec![Linear::identity(2)], Activation::Tanh).unwrap();
        let ids: Vec<String> = (0..4).map(|i| format!("s{i}")).collect();
        let mut enc = EncoderState::from_branches(cfg, id(), id(), ids.clone()).unwrap();
        let feats = array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]];
        for r in 0..4 {
            enc.table_update_row(r, feats.row(r), feats.row(r)).unwrap();
        }
        let g = InteractionGraph::new(
            ids,
            &[
                ("p0".into(), vec!["s0".into(), "s1".into()]),
                ("p1".into(), vec!["s2".into(), "s3".into()]),
            ],
        )
        .unwrap();
        let mut fusion = Fusion {
            audio: super::super::FusionParams::identity(2),
            text: super::super::FusionParams::identity(2),
        };
        let samples = vec![
            TpcSample {
                playlist: 0,
                track: 0,
                context: vec![1],
            },
            TpcSample {
                playlist: 1,
                track: 2,
                context: vec![3, 2],
            },
        ];
        let f = Features {
            audio: &feats,
            text: &feats,
        };
        let out = tpc_loss(
            &mut enc,
            Some(&mut fusion),
            f,
            &g,
            &samples,
            &Negatives::none(2),
            1.0,
        )
        .unwrap();
        assert!((out.loss - HAND).abs() < 1e-12);
        assert_eq!(out.used, 2);
        let (w, _) = wtc_loss(&mut enc, f, &[0, 2], &Negatives::none(2), 1.0).unwrap();
        assert!((out.loss - w).abs() < 1e-12);
    }

    #[test]
    fn tpc_skips_samples_with_only_cold_context() {
        let (mut enc, fa, ft) = encoder(5);
        let feats = Features {
            audio: &fa,
            text: &ft,
        };
        let samples = vec![TpcSample {
            playlist: 0,
            track: 0,
            context: vec![1, 2],
        }];
        let out = tpc_loss(
            &mut enc,
            None,
            feats,
            &graph(),
            &samples,
            &Negatives::none(6),
            0.1,
        )
        .unwrap();
        assert_eq!((out.used, out.skipped, out.loss), (0, 1, 0.0));
        let bad = vec![TpcSample {
            playlist: 2,
            track: 0,
            context: vec![4],
        }];
        assert!(matches!(
            tpc_loss(
                &mut enc,
                None,
                feats,
                &graph(),
                &bad,
                &Negatives::none(6),
                0.1
            ),
            Err(Error::Contract(_))
        ));
    }
}
