use std::collections::HashSet;

use crate::{Error, Result};

fn check<S: AsRef<str>>(relevant: &HashSet<S>, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Domain("K must be at least 1".into()));
    }
    if relevant.is_empty() {
        return Err(Error::Domain("relevant set is empty".into()));
    }
    Ok(())
}

/// `|top-K ∩ relevant| / |relevant|`.
pub fn recall_at_k(ranked: &[String], relevant: &HashSet<String>, k: usize) -> Result<f64> {
    check(relevant, k)?;
    let hits = ranked
        .iter()
        .take(k)
        .filter(|id| relevant.contains(*id))
        .count();
    Ok(hits as f64 / relevant.len() as f64)
}

/// Binary-relevance NDCG with the ideal DCG truncated at
/// `min(K, |relevant|)`.
pub fn ndcg_at_k(ranked: &[String], relevant: &HashSet<String>, k: usize) -> Result<f64> {
    check(relevant, k)?;
    let gain = |rank: usize| 1.0 / ((rank + 1) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, id)| relevant.contains(*id))
        .map(|(r, _)| gain(r + 1))
        .sum();
    let idcg: f64 = (1..=k.min(relevant.len())).map(gain).sum();
    Ok(dcg / idcg)
}
