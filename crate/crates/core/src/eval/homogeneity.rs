use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Playlist, Pool};
use crate::numkit::cosine_sim;
use crate::recsys::EmbeddingTable;
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    /// Mean over scored playlists.
    pub mean: f64,
    pub per_playlist: Vec<(String, f64)>,
    /// Playlists with fewer than two members.
    pub skipped: usize,
}

/// Mean pairwise cosine similarity of member rows, per playlist and
/// averaged over playlists.
pub fn homogeneity(
    playlists: &[Playlist],
    embeddings: &EmbeddingTable,
) -> Result<HomogeneityReport> {
    let mut per_playlist = Vec::new();
    let mut skipped = 0;
    for p in playlists {
        if p.len() < 2 {
            skipped += 1;
            continue;
        }
        let rows = p
            .track_ids
            .iter()
            .map(|id| embeddings.row(id))
            .collect::<Result<Vec<_>>>()?;
        let mut total = 0.0;
        let mut pairs = 0usize;
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                total += cosine_sim(rows[i], rows[j])?;
                pairs += 1;
            }
        }
        per_playlist.push((p.id.clone(), total / pairs as f64));
    }
    let mean = if per_playlist.is_empty() {
        0.0
    } else {
        per_playlist.iter().map(|x| x.1).sum::<f64>() / per_playlist.len() as f64
    };
    Ok(HomogeneityReport {
        mean,
        per_playlist,
        skipped,
    })
}

/// The same tracks and playlist sizes, with memberships shuffled across
/// playlists. Serves as the null baseline for [`homogeneity`].
pub fn shuffled_playlists(pool: &Pool, seed: u64) -> Vec<Playlist> {
    let mut slots: Vec<String> = pool
        .playlists()
        .iter()
        .flat_map(|p| p.track_ids.iter().cloned())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    slots.shuffle(&mut rng);
    let mut out = Vec::with_capacity(pool.playlists().len());
    let mut offset = 0;
    for p in pool.playlists() {
        out.push(Playlist::new(
            format!("{}-shuffled", p.id),
            slots[offset..offset + p.len()].to_vec(),
        ));
        offset += p.len();
    }
    out
}
