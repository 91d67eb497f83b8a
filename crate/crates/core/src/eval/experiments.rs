use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::tasks::{build_tasks, evaluate, MetricReport};
use crate::corpus::{Corpus, InteractionGraph};
use crate::encoder::{EncoderConfig, Modality};
use crate::losses::Stage;
use crate::recsys::{
    clcrec_fit, dropoutnet_fit, playlist_content, wmf_fit, ClcrecConfig, DropoutNetConfig,
    EmbeddingTable, ItemKnn, Pooling, Recommender, WmfConfig,
};
use crate::trainer::{
    initial_checkpoint, run_stage, run_stages, Checkpoint, TrainConfig, TrainLog,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub ks: Vec<usize>,
    /// Seed tracks per test playlist.
    pub q: usize,
    pub seed: u64,
    pub pooling: Pooling,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self {
            ks: vec![10, 20, 40],
            q: 10,
            seed: 1,
            pooling: Pooling::Normalized,
        }
    }
}

/// Builds the test-pool tasks for `params` and scores `recommender`.
pub fn evaluate_test(
    recommender: &dyn Recommender,
    corpus: &Corpus,
    content: &EmbeddingTable,
    params: &EvalParams,
) -> Result<MetricReport> {
    let tasks = build_tasks(corpus.test(), params.q, params.seed)?;
    if tasks.tasks.is_empty() {
        return Err(Error::Config(format!(
            "no test playlist has more than {} tracks",
            params.q
        )));
    }
    evaluate(
        recommender,
        content,
        &tasks.tasks,
        &params.ks,
        params.pooling,
    )
}

/// Representations compared in the ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Raw text features.
    TextOnly,
    /// Raw audio features.
    AudioOnly,
    Untrained,
    #[serde(rename = "stage-1")]
    Stage1,
    #[serde(rename = "stage-2")]
    Stage2,
    /// Stage 3 with a normalized mean in place of the fusion layer.
    #[serde(rename = "stage-3-no-fusion")]
    Stage3NoFusion,
    #[serde(rename = "stage-3-fusion")]
    Stage3Fusion,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::TextOnly,
        Variant::AudioOnly,
        Variant::Untrained,
        Variant::Stage1,
        Variant::Stage2,
        Variant::Stage3NoFusion,
        Variant::Stage3Fusion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::TextOnly => "text-only",
            Variant::AudioOnly => "audio-only",
            Variant::Untrained => "untrained",
            Variant::Stage1 => "stage-1",
            Variant::Stage2 => "stage-2",
            Variant::Stage3NoFusion => "stage-3-no-fusion",
            Variant::Stage3Fusion => "stage-3-fusion",
        }
    }

    fn stages_needed(self) -> usize {
        match self {
            Variant::TextOnly | Variant::AudioOnly | Variant::Untrained => 0,
            Variant::Stage1 => 1,
            Variant::Stage2 | Variant::Stage3NoFusion => 2,
            Variant::Stage3Fusion => 3,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation variant `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<(Variant, MetricReport)>,
}

impl AblationReport {
    pub fn get(&self, v: Variant) -> Option<&MetricReport> {
        self.rows.iter().find(|r| r.0 == v).map(|r| &r.1)
    }

    pub fn to_table(&self) -> String {
        comparison_table("variant", self.rows.iter().map(|(v, r)| (v.to_string(), r)))
    }

    pub fn to_tsv(&self) -> String {
        comparison_tsv("variant", self.rows.iter().map(|(v, r)| (v.to_string(), r)))
    }
}

pub(crate) fn comparison_table<'a>(
    label: &str,
    rows: impl Iterator<Item = (String, &'a MetricReport)>,
) -> String {
    let rows: Vec<_> = rows.collect();
    let mut s = format!("{label:<20}");
    if let Some((_, r)) = rows.first() {
        for k in &r.ks {
            let _ = write!(s, "  {:>8}  {:>8}", format!("R@{k}"), format!("N@{k}"));
        }
    }
    s.push('\n');
    for (name, r) in rows {
        let _ = write!(s, "{name:<20}");
        for i in 0..r.ks.len() {
            let _ = write!(s, "  {:>8.4}  {:>8.4}", r.recall[i], r.ndcg[i]);
        }
        s.push('\n');
    }
    s
}

pub(crate) fn comparison_tsv<'a>(
    label: &str,
    rows: impl Iterator<Item = (String, &'a MetricReport)>,
) -> String {
    let mut s = format!("{label}\tmetric\tk\tvalue\n");
    for (name, r) in rows {
        for (i, k) in r.ks.iter().enumerate() {
            let _ = writeln!(s, "{name}\trecall\t{k}\t{}", r.recall[i]);
            let _ = writeln!(s, "{name}\tndcg\t{k}\t{}", r.ndcg[i]);
        }
    }
    s
}

/// Test-pool embedding table of a checkpoint.
pub fn test_table(ckpt: &Checkpoint, corpus: &Corpus, pooling: Pooling) -> Result<EmbeddingTable> {
    EmbeddingTable::from_encoder(&ckpt.encoder, corpus.test().tracks(), pooling)
}

/// Checkpoints and training log produced for an ablation run.
#[derive(Debug, Clone)]
pub struct AblationRun {
    pub report: AblationReport,
    pub log: TrainLog,
    pub checkpoints: Vec<(Variant, Checkpoint)>,
}

/// Trains the stages the requested variants need (once, shared between
/// variants) and scores every variant on the test pool with ItemKNN.
pub fn run_ablation(
    corpus: &Corpus,
    encoder: &EncoderConfig,
    train: &TrainConfig,
    variants: &[Variant],
    eval: &EvalParams,
) -> Result<AblationRun> {
    if variants.is_empty() {
        return Err(Error::Config("no ablation variants requested".into()));
    }
    let needed = variants
        .iter()
        .map(|v| v.stages_needed())
        .max()
        .unwrap_or(0);
    let untrained = initial_checkpoint(corpus, encoder, train.seed)?;
    let (stage_ckpts, mut log) = if needed > 0 {
        run_stages(untrained.clone(), &Stage::ALL[..needed], corpus, train)?
    } else {
        (Vec::new(), TrainLog::default())
    };

    let mut rows = Vec::with_capacity(variants.len());
    let mut checkpoints = Vec::new();
    for &v in variants {
        let ckpt = match v {
            Variant::TextOnly | Variant::AudioOnly => None,
            Variant::Untrained => Some(untrained.clone()),
            Variant::Stage1 => Some(stage_ckpts[0].clone()),
            Variant::Stage2 => Some(stage_ckpts[1].clone()),
            Variant::Stage3Fusion => Some(stage_ckpts[2].clone()),
            Variant::Stage3NoFusion => {
                let cfg = TrainConfig {
                    fusion: false,
                    ..train.clone()
                };
                let (c, l) = run_stage(Stage::Three, stage_ckpts[1].clone(), corpus, &cfg)?;
                log.extend(l);
                Some(c)
            }
        };
        let table = match (&ckpt, v) {
            (Some(c), _) => test_table(c, corpus, eval.pooling)?,
            (None, Variant::TextOnly) => {
                EmbeddingTable::from_features(corpus.test().tracks(), Modality::Text)?
            }
            (None, _) => EmbeddingTable::from_features(corpus.test().tracks(), Modality::Audio)?,
        };
        rows.push((v, evaluate_test(&ItemKnn, corpus, &table, eval)?));
        if let Some(c) = ckpt {
            checkpoints.push((v, c));
        }
    }
    Ok(AblationRun {
        report: AblationReport { rows },
        log,
        checkpoints,
    })
}

/// Per-J results of [`sensitivity_sweep`], ascending in J.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<(usize, MetricReport)>,
}

impl SweepReport {
    pub fn to_table(&self) -> String {
        comparison_table("J", self.rows.iter().map(|(j, r)| (j.to_string(), r)))
    }

    pub fn to_tsv(&self) -> String {
        comparison_tsv("j", self.rows.iter().map(|(j, r)| (j.to_string(), r)))
    }
}

/// Trains stage 3 once per context size `J`, all starting from one shared
/// stage-2 checkpoint, and scores each with ItemKNN on the test pool.
pub fn sensitivity_sweep(
    corpus: &Corpus,
    stage2: &Checkpoint,
    train: &TrainConfig,
    js: &[usize],
    eval: &EvalParams,
) -> Result<SweepReport> {
    if js.is_empty() || js.contains(&0) {
        return Err(Error::Config(
            "J values must be a non-empty list of positive integers".into(),
        ));
    }
    let mut js = js.to_vec();
    js.sort_unstable();
    js.dedup();
    let mut rows = Vec::with_capacity(js.len());
    for j in js {
        let cfg = TrainConfig { j, ..train.clone() };
        let (c, _) = run_stage(Stage::Three, stage2.clone(), corpus, &cfg)?;
        let table = test_table(&c, corpus, eval.pooling)?;
        rows.push((j, evaluate_test(&ItemKnn, corpus, &table, eval)?));
    }
    Ok(SweepReport { rows })
}

/// Downstream recommenders selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecommenderKind {
    ItemKnn,
    DropoutNet,
    Clcrec,
}

impl FromStr for RecommenderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "itemknn" => Ok(RecommenderKind::ItemKnn),
            "dropoutnet" => Ok(RecommenderKind::DropoutNet),
            "clcrec" => Ok(RecommenderKind::Clcrec),
            other => Err(Error::Config(format!(
                "unknown recommender `{other}` (expected itemknn, dropoutnet or clcrec)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecommenderParams {
    pub wmf: WmfConfig,
    pub dropoutnet: DropoutNetConfig,
    pub clcrec: ClcrecConfig,
}

/// Fits `kind` on the corpus's train pool, using `train_content` as the
/// content representation of the train tracks.
pub fn fit_recommender(
    kind: RecommenderKind,
    corpus: &Corpus,
    train_content: &EmbeddingTable,
    params: &RecommenderParams,
) -> Result<Box<dyn Recommender + Send + Sync>> {
    let graph = InteractionGraph::from_pool(corpus.train());
    Ok(match kind {
        RecommenderKind::ItemKnn => Box::new(ItemKnn),
        RecommenderKind::DropoutNet => {
            let wmf = wmf_fit(&graph, &params.wmf)?;
            let pc = playlist_content(train_content, corpus.train())?;
            Box::new(dropoutnet_fit(
                &wmf,
                train_content,
                &pc,
                &params.dropoutnet,
            )?)
        }
        RecommenderKind::Clcrec => Box::new(clcrec_fit(&graph, train_content, &params.clcrec)?),
    })
}
