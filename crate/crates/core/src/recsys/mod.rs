//! Cold-start playlist continuation on top of per-track embeddings.
//!
//! Every recommender scores candidates by an inner product between a
//! transformed query and transformed candidate rows, then ranks by score
//! with ties broken by ascending id. Seed tracks are always excluded.

mod clcrec;
mod dropoutnet;
mod table;
mod wmf;

pub use clcrec::{clcrec_batch_loss, clcrec_fit, ClcrecBatch, ClcrecConfig, ClcrecState};
pub use dropoutnet::{
    dropoutnet_batch_loss, dropoutnet_fit, playlist_content, DropoutNetBatch, DropoutNetConfig,
    DropoutNetState,
};
pub use table::{feature_matrices, EmbeddingTable};
pub use wmf::{wmf_fit, wmf_objective, WmfConfig, WmfState};

use std::cmp::Ordering;
use std::collections::HashSet;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::numkit::{normalize, Matrix, Vector};
use crate::{Error, Result};

/// How pooled means are post-processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Mean, then L2-normalize.
    #[default]
    Normalized,
    /// Plain arithmetic mean.
    RawMean,
}

/// Unified track representation from its audio and text embeddings.
pub fn unify(a: ArrayView1<f64>, t: ArrayView1<f64>) -> Result<Vector> {
    unify_with(a, t, Pooling::Normalized)
}

pub fn unify_with(a: ArrayView1<f64>, t: ArrayView1<f64>, pooling: Pooling) -> Result<Vector> {
    if a.len() != t.len() {
        return Err(Error::Shape(format!(
            "unify lengths differ: {} vs {}",
            a.len(),
            t.len()
        )));
    }
    let mean = (&a + &t) * 0.5;
    match pooling {
        Pooling::Normalized => normalize(mean.view()),
        Pooling::RawMean => Ok(mean),
    }
}

/// Playlist representation: mean of its tracks' rows.
pub fn pool_playlist<S: AsRef<str>>(table: &EmbeddingTable, track_ids: &[S]) -> Result<Vector> {
    pool_playlist_with(table, track_ids, Pooling::Normalized)
}

pub fn pool_playlist_with<S: AsRef<str>>(
    table: &EmbeddingTable,
    track_ids: &[S],
    pooling: Pooling,
) -> Result<Vector> {
    if track_ids.is_empty() {
        return Err(Error::Domain("cannot pool an empty playlist".into()));
    }
    let mut sum = Vector::zeros(table.dim());
    for id in track_ids {
        sum += &table.row(id.as_ref())?;
    }
    let mean = sum / track_ids.len() as f64;
    match pooling {
        Pooling::Normalized => normalize(mean.view()),
        Pooling::RawMean => Ok(mean),
    }
}

/// Top-`k` ids by descending score, ties by ascending id, skipping
/// `exclude`. Returns fewer than `k` ids when fewer candidates remain.
pub fn rank_top_k(
    ids: &[String],
    scores: ArrayView1<f64>,
    k: usize,
    exclude: &HashSet<String>,
) -> Result<Vec<String>> {
    if k == 0 {
        return Err(Error::Domain("K must be at least 1".into()));
    }
    if ids.len() != scores.len() {
        return Err(Error::Shape(format!(
            "{} ids for {} scores",
            ids.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("recommendation scores".into()));
    }
    let mut order: Vec<usize> = (0..ids.len())
        .filter(|&i| !exclude.contains(&ids[i]))
        .collect();
    let cmp = |a: &usize, b: &usize| {
        scores[*b]
            .partial_cmp(&scores[*a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| ids[*a].cmp(&ids[*b]))
    };
    if order.len() > k {
        order.select_nth_unstable_by(k - 1, cmp);
        order.truncate(k);
    }
    order.sort_unstable_by(cmp);
    Ok(order.into_iter().map(|i| ids[i].clone()).collect())
}

/// A fitted downstream recommender.
pub trait Recommender {
    fn name(&self) -> &str;

    /// Maps a pooled seed representation into scoring space.
    fn query_vector(&self, pooled: ArrayView1<f64>) -> Result<Vector>;

    /// Maps candidate content rows into scoring space.
    fn candidate_matrix(&self, candidates: &EmbeddingTable) -> Result<Matrix>;

    fn recommend(
        &self,
        pooled: ArrayView1<f64>,
        candidates: &EmbeddingTable,
        k: usize,
        exclude: &HashSet<String>,
    ) -> Result<Vec<String>> {
        let q = self.query_vector(pooled)?;
        let c = self.candidate_matrix(candidates)?;
        if c.ncols() != q.len() {
            return Err(Error::Shape(format!(
                "query width {} does not match candidate width {}",
                q.len(),
                c.ncols()
            )));
        }
        rank_top_k(candidates.ids(), c.dot(&q).view(), k, exclude)
    }
}

/// Nearest neighbours by inner product in content space.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ItemKnn;

impl Recommender for ItemKnn {
    fn name(&self) -> &str {
        "itemknn"
    }

    fn query_vector(&self, pooled: ArrayView1<f64>) -> Result<Vector> {
        Ok(pooled.to_owned())
    }

    fn candidate_matrix(&self, candidates: &EmbeddingTable) -> Result<Matrix> {
        Ok(candidates.vectors().clone())
    }
}

pub fn itemknn_recommend(
    query: ArrayView1<f64>,
    candidates: &EmbeddingTable,
    k: usize,
    exclude: &HashSet<String>,
) -> Result<Vec<String>> {
    ItemKnn.recommend(query, candidates, k, exclude)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn table(rows: &[(&str, [f64; 2])]) -> EmbeddingTable {
        let ids = rows.iter().map(|r| r.0.to_string()).collect();
        let m = Matrix::from_shape_fn((rows.len(), 2), |(i, j)| rows[i].1[j]);
        EmbeddingTable::new(ids, m).unwrap()
    }

    fn set(ids: &[&str]) -> HashSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn unify_examples() {
        let a = array![0.6, 0.8];
        assert_eq!(unify(a.view(), a.view()).unwrap(), a);
        let e = unify(array![1.0, 0.0].view(), array![0.0, 1.0].view()).unwrap();
        assert!((e[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!((e[1] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(matches!(
            unify(a.view(), (-&a).view()),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            unify(a.view(), array![1.0].view()),
            Err(Error::Shape(_))
        ));
        let raw = unify_with(
            array![1.0, 0.0].view(),
            array![0.0, 1.0].view(),
            Pooling::RawMean,
        )
        .unwrap();
        assert_eq!(raw, array![0.5, 0.5]);
    }

    #[test]
    fn pooling_examples() {
        let t = table(&[("a", [1.0, 0.0]), ("b", [0.0, 1.0]), ("c", [1.0, 0.0])]);
        assert_eq!(pool_playlist(&t, &["a"]).unwrap(), array![1.0, 0.0]);
        assert_eq!(pool_playlist(&t, &["a", "c"]).unwrap(), array![1.0, 0.0]);
        let mid = pool_playlist(&t, &["a", "b"]).unwrap();
        assert!((mid.dot(&array![1.0, 0.0]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert!(matches!(
            pool_playlist::<&str>(&t, &[]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            pool_playlist(&t, &["zz"]),
            Err(Error::UnknownId(_))
        ));
    }

    #[test]
    fn itemknn_examples() {
        let t = table(&[("c1", [1.0, 0.0]), ("c2", [0.0, 1.0]), ("c3", [0.0, 1.0])]);
        let q = array![1.0, 0.0];
        assert_eq!(
            itemknn_recommend(q.view(), &t, 1, &set(&[])).unwrap(),
            ["c1"]
        );
        assert_eq!(
            itemknn_recommend(q.view(), &t, 1, &set(&["c1"])).unwrap(),
            ["c2"]
        );
        assert_eq!(
            itemknn_recommend(q.view(), &t, 10, &set(&["c1"])).unwrap(),
            ["c2", "c3"]
        );
        assert!(itemknn_recommend(q.view(), &t, 0, &set(&[])).is_err());
    }

    proptest! {
        #[test]
        fn matches_full_sort_oracle(
            scores in proptest::collection::vec(-3i32..3, 1..60),
            k in 1usize..20,
            ex in proptest::collection::vec(any::<bool>(), 60),
        ) {
            let ids: Vec<String> = (0..scores.len()).map(|i| format!("id{:03}", (i * 37) % 101)).collect();
            let s: Vector = scores.iter().map(|&x| x as f64 * 0.5).collect();
            let exclude: HashSet<String> = ids.iter().zip(&ex).filter(|(_, e)| **e).map(|(i, _)| i.clone()).collect();
            let got = rank_top_k(&ids, s.view(), k, &exclude).unwrap();
            let mut all: Vec<(f64, String)> = ids.iter().cloned().zip(s.iter().copied()).map(|(i, v)| (v, i)).collect();
            all.retain(|(_, i)| !exclude.contains(i));
            all.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
            let want: Vec<String> = all.into_iter().take(k).map(|x| x.1).collect();
            prop_assert_eq!(got, want);
        }
    }
}
