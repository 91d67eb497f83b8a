use std::time::Instant;

use ndarray::Axis;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{lr_at, Checkpoint, EpochRecord, StageRecord, TrainConfig, TrainLog};
use crate::corpus::{derive_cooccurrence, CooccurrenceGraph, Corpus, InteractionGraph, Pool};
use crate::encoder::{EncoderConfig, EncoderState};
use crate::eval::{build_tasks, evaluate, EvalTask};
use crate::losses::{
    stage_objective, tpc_loss, ttc_loss, wtc_loss, Encoded, Features, Fusion, Negatives, Stage,
    StageComponents, TpcSample,
};
use crate::numkit::{Adam, AdamConfig, Parameterized};
use crate::recsys::{feature_matrices, EmbeddingTable, ItemKnn, Pooling};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validation {
    pub recall10: f64,
    pub ndcg10: f64,
}

/// ItemKNN Recall@10 / NDCG@10 of `encoder` on `pool` for fixed `tasks`.
pub fn validation_metrics(
    encoder: &EncoderState,
    pool: &Pool,
    tasks: &[EvalTask],
) -> Result<Validation> {
    let table = EmbeddingTable::from_encoder(encoder, pool.tracks(), Pooling::Normalized)?;
    let report = evaluate(&ItemKnn, &table, tasks, &[10], Pooling::Normalized)?;
    Ok(Validation {
        recall10: report.recall[0],
        ndcg10: report.ndcg[0],
    })
}

/// An untrained encoder over the corpus's train tracks, with input widths
/// taken from the corpus.
pub fn initial_checkpoint(
    corpus: &Corpus,
    config: &EncoderConfig,
    seed: u64,
) -> Result<Checkpoint> {
    let config = EncoderConfig {
        d_audio: corpus.d_audio(),
        d_text: corpus.d_text(),
        ..config.clone()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(Checkpoint::new(EncoderState::new(
        config,
        corpus.train().track_ids(),
        &mut rng,
    )?))
}

/// Trains one stage with validation on the corpus's validation pool.
pub fn run_stage(
    stage: Stage,
    start: Checkpoint,
    corpus: &Corpus,
    config: &TrainConfig,
) -> Result<(Checkpoint, TrainLog)> {
    config.validate()?;
    let tasks = build_tasks(corpus.validation(), config.val_seeds, config.seed)?.tasks;
    if tasks.is_empty() {
        return Err(Error::Config(format!(
            "no validation playlist has more than {} tracks",
            config.val_seeds
        )));
    }
    let mut validate = |enc: &EncoderState| validation_metrics(enc, corpus.validation(), &tasks);
    run_stage_with(stage, start, corpus.train(), config, &mut validate)
}

#[derive(Serialize)]
struct Snapshot<'a> {
    stage: Stage,
    epoch: usize,
    step: usize,
    lr: f64,
    reason: String,
    wtc: Option<f64>,
    ttc: Option<f64>,
    tpc: Option<f64>,
    batch: &'a [usize],
}

/// [`run_stage`] with a caller-supplied validation metric, evaluated after
/// every epoch.
pub fn run_stage_with(
    stage: Stage,
    start: Checkpoint,
    train: &Pool,
    config: &TrainConfig,
    validate: &mut dyn FnMut(&EncoderState) -> Result<Validation>,
) -> Result<(Checkpoint, TrainLog)> {
    config.validate()?;
    let expected_prev = match stage {
        Stage::One => None,
        Stage::Two => Some(Stage::One),
        Stage::Three => Some(Stage::Two),
    };
    if start.stage != expected_prev {
        return Err(Error::Contract(format!(
            "stage {stage} must start from the stage {} checkpoint, got {}",
            expected_prev.map_or("0 (untrained)".to_string(), |s| s.to_string()),
            start
                .stage
                .map_or("an untrained one".to_string(), |s| format!("stage {s}"))
        )));
    }
    let train_ids = train.track_ids();
    if start.encoder.tables().ids() != &train_ids[..] {
        return Err(Error::Contract(
            "checkpoint lookup tables do not match the training pool".into(),
        ));
    }
    if train_ids.is_empty() {
        return Err(Error::EmptyCorpus("training pool has no tracks".into()));
    }

    let (xa, xt) = feature_matrices(train.tracks())?;
    let feats = Features {
        audio: &xa,
        text: &xt,
    };
    let graph = InteractionGraph::from_pool(train);
    let cooc = derive_cooccurrence(&graph);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(u64::from(stage.number()));

    let start_hash = start.hash()?;
    let mut ckpt = start;
    ckpt.stage = Some(stage);
    let d = ckpt.encoder.config().d_embed;
    if stage.uses_tpc() && config.fusion && ckpt.fusion.is_none() {
        ckpt.fusion = Some(Fusion::init(d, config.fusion_init_std, &mut rng));
    }

    let n = train_ids.len();
    let steps_per_epoch = n.div_ceil(config.batch_size);
    let total_steps = steps_per_epoch * config.max_epochs;
    let warmup = (config.warmup_fraction * total_steps as f64).round() as usize;
    let adam_cfg = AdamConfig {
        beta1: config.beta1,
        beta2: config.beta2,
        ..AdamConfig::default()
    };
    let mut adam_encoder = Adam::new(adam_cfg);
    let mut adam_fusion = Adam::new(adam_cfg);

    let mut log = TrainLog::default();
    let mut best: Option<(Checkpoint, f64, usize)> = None;
    let mut since_best = 0;
    let mut step = 0;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=config.max_epochs {
        let clock = Instant::now();
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
        let (mut sum_wtc, mut sum_ttc, mut sum_tpc, mut sum_total) = (0.0, 0.0, 0.0, 0.0);
        let mut tpc_skipped = 0;
        let mut lr = 0.0;
        for batch in order.chunks(config.batch_size) {
            step += 1;
            lr = lr_at(step, warmup, total_steps, config.lr);
            let diverged = |reason: String, parts: StageComponents| -> Error {
                let snap = Snapshot {
                    stage,
                    epoch,
                    step,
                    lr,
                    reason,
                    wtc: parts.wtc,
                    ttc: parts.ttc,
                    tpc: parts.tpc,
                    batch,
                };
                match serde_json::to_string(&snap) {
                    Ok(json) => Error::Diverged(json),
                    Err(e) => e.into(),
                }
            };
            let Checkpoint {
                encoder, fusion, ..
            } = &mut ckpt;
            let active = if config.fusion { fusion.as_mut() } else { None };
            let out = match step_losses(
                stage, encoder, active, feats, &graph, &cooc, batch, config, &mut rng,
            ) {
                Ok(out) => out,
                Err(Error::NonFinite(what)) => {
                    return Err(diverged(what, StageComponents::default()))
                }
                Err(e) => return Err(e),
            };
            let parts = out.parts;
            let total = stage_objective(stage, &parts)?;
            if !total.is_finite() {
                return Err(diverged("non-finite objective".into(), parts));
            }
            let wtc = parts.wtc.unwrap_or(0.0);
            tpc_skipped += out.tpc_skipped;

            adam_encoder.step(encoder, lr);
            if config.fusion {
                if let Some(f) = fusion.as_mut() {
                    adam_fusion.step(f, lr);
                }
            }
            encoder.momentum_update();
            let keys =
                encoder.momentum_encode(&xa.select(Axis(0), batch), &xt.select(Axis(0), batch))?;
            encoder.queue_push(&keys);
            for e in &out.encoded {
                for (r, &row) in e.indices.iter().enumerate() {
                    encoder.table_update_row(row, e.audio.row(r), e.text.row(r))?;
                }
            }

            sum_wtc += wtc;
            sum_ttc += parts.ttc.unwrap_or(0.0);
            sum_tpc += parts.tpc.unwrap_or(0.0);
            sum_total += total;
        }

        let v = validate(&ckpt.encoder)?;
        let steps = steps_per_epoch as f64;
        log.epochs.push(EpochRecord {
            stage,
            epoch,
            loss: sum_total / steps,
            wtc: sum_wtc / steps,
            ttc: stage.uses_ttc().then_some(sum_ttc / steps),
            tpc: stage.uses_tpc().then_some(sum_tpc / steps),
            tpc_skipped,
            val_recall10: v.recall10,
            val_ndcg10: v.ndcg10,
            lr,
            wall_ms: clock.elapsed().as_millis() as u64,
        });

        if best.as_ref().is_none_or(|b| v.recall10 > b.1) {
            best = Some((ckpt.clone(), v.recall10, epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    let (best_ckpt, _, best_epoch) = best.expect("max_epochs is positive");
    let epochs_run = log.epochs.len();
    log.stages.push(StageRecord {
        stage,
        start_hash,
        end_hash: best_ckpt.hash()?,
        epochs_run,
        best_epoch,
        stopped_early: epochs_run < config.max_epochs,
    });
    Ok((best_ckpt, log))
}

struct StepOut {
    parts: StageComponents,
    encoded: Vec<Encoded>,
    tpc_skipped: usize,
}

/// Evaluates the stage's losses on one batch, accumulating gradients.
#[allow(clippy::too_many_arguments)]
fn step_losses(
    stage: Stage,
    encoder: &mut EncoderState,
    fusion: Option<&mut Fusion>,
    feats: Features<'_>,
    graph: &InteractionGraph,
    cooc: &CooccurrenceGraph,
    batch: &[usize],
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<StepOut> {
    encoder.zero_grad();
    let (na, nt) = encoder.queue_negatives(encoder.queue().capacity());
    let neg = Negatives {
        audio: na,
        text: nt,
    };
    let mut encoded = Vec::with_capacity(3);
    let mut tpc_skipped = 0;

    let (wtc, e) = wtc_loss(encoder, feats, batch, &neg, config.tau)?;
    encoded.push(e);
    let mut parts = StageComponents {
        wtc: Some(wtc),
        ..StageComponents::default()
    };
    if stage.uses_ttc() {
        let pairs: Vec<(usize, usize)> = batch
            .iter()
            .filter_map(|&i| {
                let nb = cooc.neighbors(i);
                (!nb.is_empty()).then(|| (i, nb[rng.random_range(0..nb.len())]))
            })
            .collect();
        let mut ttc = 0.0;
        if !pairs.is_empty() {
            let (l, e) = ttc_loss(encoder, feats, cooc, &pairs, &neg, config.tau)?;
            encoded.push(e);
            ttc = l;
        }
        parts.ttc = Some(ttc);
    }
    if stage.uses_tpc() {
        let mut fusion = fusion;
        if let Some(f) = fusion.as_deref_mut() {
            f.zero_grad();
        }
        let samples = tpc_samples(graph, batch, config.j, rng);
        let out = tpc_loss(encoder, fusion, feats, graph, &samples, &neg, config.tau)?;
        tpc_skipped = out.skipped + (batch.len() - samples.len());
        encoded.push(out.encoded);
        parts.tpc = Some(out.loss);
    }
    Ok(StepOut {
        parts,
        encoded,
        tpc_skipped,
    })
}

/// One sample per anchor that has a parent playlist with other members: a
/// uniformly drawn parent and up to `j` of its other members.
fn tpc_samples(
    graph: &InteractionGraph,
    batch: &[usize],
    j: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<TpcSample> {
    let mut out = Vec::with_capacity(batch.len());
    for &track in batch {
        let parents = graph.parents(track);
        if parents.is_empty() {
            continue;
        }
        let playlist = parents[rng.random_range(0..parents.len())];
        let others: Vec<usize> = graph
            .members(playlist)
            .iter()
            .copied()
            .filter(|&s| s != track)
            .collect();
        if others.is_empty() {
            continue;
        }
        let mut picked = sample(rng, others.len(), j.min(others.len())).into_vec();
        picked.sort_unstable();
        out.push(TpcSample {
            playlist,
            track,
            context: picked.into_iter().map(|i| others[i]).collect(),
        });
    }
    out
}

/// Runs `stages` in order, each starting from the previous best
/// checkpoint. Returns one checkpoint per stage and the joined log.
pub fn run_stages(
    start: Checkpoint,
    stages: &[Stage],
    corpus: &Corpus,
    config: &TrainConfig,
) -> Result<(Vec<Checkpoint>, TrainLog)> {
    if stages.is_empty() {
        return Err(Error::Config("stage list is empty".into()));
    }
    let mut log = TrainLog::default();
    let mut out: Vec<Checkpoint> = Vec::with_capacity(stages.len());
    let mut current = start;
    for &stage in stages {
        let (next, l) = run_stage(stage, current, corpus, config)?;
        log.extend(l);
        out.push(next.clone());
        current = next;
    }
    Ok((out, log))
}

/// Stages 1, 2 and 3 from a freshly initialized encoder.
pub fn run_all_stages(
    corpus: &Corpus,
    encoder: &EncoderConfig,
    config: &TrainConfig,
) -> Result<(Checkpoint, TrainLog)> {
    let start = initial_checkpoint(corpus, encoder, config.seed)?;
    let (mut ckpts, log) = run_stages(start, &Stage::ALL, corpus, config)?;
    Ok((ckpts.pop().expect("three stages"), log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SyntheticParams};

    fn corpus() -> Corpus {
        let p = SyntheticParams {
            n_genres: 2,
            train_tracks: 40,
            train_playlists: 10,
            validation_tracks: 20,
            validation_playlists: 4,
            test_tracks: 20,
            test_playlists: 4,
            tracks_per_playlist: 5,
            d_audio: 4,
            d_text: 4,
            ..SyntheticParams::default()
        };
        generate_synthetic(&p).unwrap().0
    }

    fn encoder_cfg() -> EncoderConfig {
        EncoderConfig {
            hidden: vec![8],
            d_embed: 8,
            queue_capacity: 16,
            ..EncoderConfig::default()
        }
    }

    fn train_cfg() -> TrainConfig {
        TrainConfig {
            batch_size: 8,
            max_epochs: 4,
            patience: 2,
            lr: 1e-2,
            j: 3,
            val_seeds: 2,
            ..TrainConfig::default()
        }
    }

    fn scripted(
        values: Vec<f64>,
        seen: &mut Vec<String>,
    ) -> impl FnMut(&EncoderState) -> Result<Validation> + '_ {
        let mut i = 0;
        move |enc: &EncoderState| {
            seen.push(Checkpoint::new(enc.clone()).hash()?);
            let v = values[i.min(values.len() - 1)];
            i += 1;
            Ok(Validation {
                recall10: v,
                ndcg10: v,
            })
        }
    }

    #[test]
    fn early_stop_returns_best_epoch() {
        let c = corpus();
        let start = initial_checkpoint(&c, &encoder_cfg(), 1).unwrap();
        let cfg = TrainConfig {
            patience: 1,
            ..train_cfg()
        };
        let mut seen = Vec::new();
        let mut v = scripted(vec![0.5, 0.4, 0.3, 0.2], &mut seen);
        let (best, log) = run_stage_with(Stage::One, start, c.train(), &cfg, &mut v).unwrap();
        drop(v);
        assert_eq!(log.epochs.len(), 2);
        assert_eq!(log.stages[0].best_epoch, 1);
        assert!(log.stages[0].stopped_early);
        assert_eq!(best.hash().unwrap(), seen[0]);
        assert_ne!(seen[0], seen[1]);
    }

    #[test]
    fn early_stop_halts_patience_epochs_after_best() {
        let c = corpus();
        for (values, best_epoch, run) in [
            (vec![0.1, 0.3, 0.2, 0.2, 0.2, 0.2, 0.2], 2, 5),
            (vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7], 7, 7),
            (vec![0.3, 0.3, 0.3, 0.3, 0.3, 0.3, 0.3], 1, 4),
        ] {
            let cfg = TrainConfig {
                max_epochs: 7,
                patience: 3,
                ..train_cfg()
            };
            let start = initial_checkpoint(&c, &encoder_cfg(), 1).unwrap();
            let mut seen = Vec::new();
            let mut v = scripted(values, &mut seen);
            let (best, log) = run_stage_with(Stage::One, start, c.train(), &cfg, &mut v).unwrap();
            drop(v);
            assert_eq!(log.epochs.len(), run);
            assert_eq!(log.stages[0].best_epoch, best_epoch);
            assert_eq!(best.hash().unwrap(), seen[best_epoch - 1]);
        }
    }

    #[test]
    fn stages_transfer_exactly_and_are_deterministic() {
        let c = corpus();
        let start = initial_checkpoint(&c, &encoder_cfg(), 3).unwrap();
        let (ckpts, log) = run_stages(start.clone(), &Stage::ALL, &c, &train_cfg()).unwrap();
        assert_eq!(log.stages.len(), 3);
        assert_eq!(log.stages[0].start_hash, start.hash().unwrap());
        for i in 0..3 {
            assert_eq!(log.stages[i].end_hash, ckpts[i].hash().unwrap());
            assert_eq!(ckpts[i].stage, Some(Stage::ALL[i]));
            assert_eq!(
                log.stage_epochs(Stage::ALL[i]).count(),
                log.stages[i].epochs_run
            );
        }
        for w in log.stages.windows(2) {
            assert_eq!(w[0].end_hash, w[1].start_hash);
        }
        assert!(ckpts[2].fusion.is_some());
        assert!(log.epochs.iter().all(|e| e.loss.is_finite()));

        let (again, log2) = run_stages(start, &Stage::ALL, &c, &train_cfg()).unwrap();
        assert_eq!(log.without_timing(), log2.without_timing());
        assert_eq!(again, ckpts);
    }

    #[test]
    fn resume_from_saved_checkpoint_reproduces_the_log() {
        let c = corpus();
        let cfg = train_cfg();
        let start = initial_checkpoint(&c, &encoder_cfg(), 4).unwrap();
        let (all, full_log) = run_stages(start.clone(), &Stage::ALL, &c, &cfg).unwrap();
        let (first, _) = run_stages(start, &[Stage::One, Stage::Two], &c, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stage2.json");
        first[1].save(&path).unwrap();
        let (third, log3) =
            run_stage(Stage::Three, Checkpoint::load(&path).unwrap(), &c, &cfg).unwrap();
        assert_eq!(third, all[2]);
        let tail: Vec<_> = full_log
            .without_timing()
            .stage_epochs(Stage::Three)
            .cloned()
            .collect();
        assert_eq!(log3.without_timing().epochs, tail);
    }

    #[test]
    fn stage_order_is_enforced() {
        let c = corpus();
        let start = initial_checkpoint(&c, &encoder_cfg(), 1).unwrap();
        assert!(matches!(
            run_stage(Stage::Two, start.clone(), &c, &train_cfg()),
            Err(Error::Contract(_))
        ));
        let mut other = start;
        other.stage = Some(Stage::Two);
        assert!(matches!(
            run_stage(Stage::Two, other, &c, &train_cfg()),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn non_finite_loss_aborts_with_snapshot() {
        let c = corpus();
        let start = initial_checkpoint(&c, &encoder_cfg(), 1).unwrap();
        let cfg = TrainConfig {
            tau: 1e-310,
            ..train_cfg()
        };
        match run_stage(Stage::One, start, &c, &cfg) {
            Err(Error::Diverged(snap)) => {
                let v: serde_json::Value = serde_json::from_str(&snap).unwrap();
                assert_eq!(v["stage"], 1);
                assert_eq!(v["step"], 1);
                assert_eq!(v["batch"].as_array().unwrap().len(), 8);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn no_fusion_stage_three_leaves_fusion_unset() {
        let c = corpus();
        let cfg = TrainConfig {
            fusion: false,
            ..train_cfg()
        };
        let start = initial_checkpoint(&c, &encoder_cfg(), 2).unwrap();
        let (ckpts, log) = run_stages(start, &Stage::ALL, &c, &cfg).unwrap();
        assert!(ckpts[2].fusion.is_none());
        assert!(log.stage_epochs(Stage::Three).all(|e| e.tpc.is_some()));
    }
}
