use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{ndcg_at_k, recall_at_k};
use crate::corpus::Pool;
use crate::recsys::{pool_playlist_with, rank_top_k, EmbeddingTable, Pooling, Recommender};
use crate::{Error, Result};

/// One continuation query: given `seeds`, retrieve `relevant` from the
/// pool's tracks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalTask {
    pub playlist_id: String,
    pub seeds: Vec<String>,
    pub relevant: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSet {
    pub tasks: Vec<EvalTask>,
    /// Playlists with `≤ q` members.
    pub skipped: usize,
}

/// Picks `q` seeds per playlist with a generator seeded by `seed`; the other
/// members become the relevant set.
pub fn build_tasks(pool: &Pool, q: usize, seed: u64) -> Result<TaskSet> {
    if q == 0 {
        return Err(Error::Config(
            "at least one seed track is required (q >= 1)".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::new();
    let mut skipped = 0;
    for p in pool.playlists() {
        if p.len() <= q {
            skipped += 1;
            continue;
        }
        let mut chosen = sample(&mut rng, p.len(), q).into_vec();
        chosen.sort_unstable();
        let chosen_set: HashSet<usize> = chosen.iter().copied().collect();
        tasks.push(EvalTask {
            playlist_id: p.id.clone(),
            seeds: chosen.iter().map(|&i| p.track_ids[i].clone()).collect(),
            relevant: (0..p.len())
                .filter(|i| !chosen_set.contains(i))
                .map(|i| p.track_ids[i].clone())
                .collect(),
        });
    }
    Ok(TaskSet { tasks, skipped })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub playlist_id: String,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ks: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    pub per_task: Vec<TaskMetrics>,
}

impl MetricReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.recall[i])
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ks.iter().position(|&x| x == k).map(|i| self.ndcg[i])
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:>6}  {:>8}  {:>8}", "K", "Recall", "NDCG");
        for (i, k) in self.ks.iter().enumerate() {
            let _ = writeln!(s, "{k:>6}  {:>8.4}  {:>8.4}", self.recall[i], self.ndcg[i]);
        }
        let _ = writeln!(s, "tasks: {}", self.per_task.len());
        s
    }

    /// `metric<TAB>k<TAB>value` rows, means only.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("metric\tk\tvalue\n");
        for (i, k) in self.ks.iter().enumerate() {
            let _ = writeln!(s, "recall\t{k}\t{}", self.recall[i]);
        }
        for (i, k) in self.ks.iter().enumerate() {
            let _ = writeln!(s, "ndcg\t{k}\t{}", self.ndcg[i]);
        }
        s
    }
}

/// Scores every task: pools the seeds in `content`, ranks every row of
/// `content` except the seeds, and averages Recall@K / NDCG@K.
pub fn evaluate(
    recommender: &dyn Recommender,
    content: &EmbeddingTable,
    tasks: &[EvalTask],
    ks: &[usize],
    pooling: Pooling,
) -> Result<MetricReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config(
            "K list must be non-empty and positive".into(),
        ));
    }
    let k_max = *ks.iter().max().expect("non-empty");
    let candidates = recommender.candidate_matrix(content)?;
    let mut per_task = Vec::with_capacity(tasks.len());
    for task in tasks {
        let pooled = pool_playlist_with(content, &task.seeds, pooling)?;
        let q = recommender.query_vector(pooled.view())?;
        if q.len() != candidates.ncols() {
            return Err(Error::Shape("query and candidate widths differ".into()));
        }
        let exclude: HashSet<String> = task.seeds.iter().cloned().collect();
        let ranked = rank_top_k(content.ids(), candidates.dot(&q).view(), k_max, &exclude)?;
        let relevant: HashSet<String> = task.relevant.iter().cloned().collect();
        per_task.push(TaskMetrics {
            playlist_id: task.playlist_id.clone(),
            recall: ks
                .iter()
                .map(|&k| recall_at_k(&ranked, &relevant, k))
                .collect::<Result<_>>()?,
            ndcg: ks
                .iter()
                .map(|&k| ndcg_at_k(&ranked, &relevant, k))
                .collect::<Result<_>>()?,
        });
    }
    Ok(summarize(ks, per_task))
}

pub(crate) fn summarize(ks: &[usize], per_task: Vec<TaskMetrics>) -> MetricReport {
    let n = per_task.len().max(1) as f64;
    let mean = |f: &dyn Fn(&TaskMetrics) -> f64| per_task.iter().map(f).sum::<f64>() / n;
    let recall = (0..ks.len()).map(|i| mean(&|t| t.recall[i])).collect();
    let ndcg = (0..ks.len()).map(|i| mean(&|t| t.ndcg[i])).collect();
    MetricReport {
        ks: ks.to_vec(),
        recall,
        ndcg,
        per_task,
    }
}
