//! Playlist-track membership and the derived track-track co-occurrence
//! relation.

use std::collections::HashMap;

use super::Pool;
use crate::{Error, Result};

/// Bipartite membership relation `r_ps`, indexed by dense playlist and track
/// positions.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    track_ids: Vec<String>,
    playlist_ids: Vec<String>,
    track_index: HashMap<String, usize>,
    /// Sorted, de-duplicated track indices per playlist.
    members: Vec<Vec<usize>>,
    /// Sorted playlist indices per track.
    parents: Vec<Vec<usize>>,
}

impl InteractionGraph {
    /// Builds the graph over the given track universe. Unknown track ids are
    /// a malformed-input error; repeated members collapse to one edge.
    pub fn new(track_ids: Vec<String>, playlists: &[(String, Vec<String>)]) -> Result<Self> {
        let mut track_index = HashMap::with_capacity(track_ids.len());
        for (i, id) in track_ids.iter().enumerate() {
            if track_index.insert(id.clone(), i).is_some() {
                return Err(Error::MalformedInput(format!(
                    "duplicate track id `{id}` in graph"
                )));
            }
        }
        let mut members = Vec::with_capacity(playlists.len());
        let mut parents = vec![Vec::new(); track_ids.len()];
        let mut playlist_ids = Vec::with_capacity(playlists.len());
        for (pi, (pid, tids)) in playlists.iter().enumerate() {
            let mut row = Vec::with_capacity(tids.len());
            for tid in tids {
                let &ti = track_index.get(tid).ok_or_else(|| {
                    Error::MalformedInput(format!(
                        "playlist `{pid}` references unknown track `{tid}`"
                    ))
                })?;
                row.push(ti);
            }
            row.sort_unstable();
            row.dedup();
            for &ti in &row {
                parents[ti].push(pi);
            }
            members.push(row);
            playlist_ids.push(pid.clone());
        }
        Ok(Self {
            track_ids,
            playlist_ids,
            track_index,
            members,
            parents,
        })
    }

    pub fn from_pool(pool: &Pool) -> Self {
        let playlists: Vec<_> = pool
            .playlists()
            .iter()
            .map(|p| (p.id.clone(), p.track_ids.clone()))
            .collect();
        Self::new(pool.track_ids(), &playlists).expect("validated pool forms a well-formed graph")
    }

    pub fn num_tracks(&self) -> usize {
        self.track_ids.len()
    }

    pub fn num_playlists(&self) -> usize {
        self.playlist_ids.len()
    }

    pub fn track_ids(&self) -> &[String] {
        &self.track_ids
    }

    pub fn playlist_ids(&self) -> &[String] {
        &self.playlist_ids
    }

    pub fn track_index(&self, id: &str) -> Option<usize> {
        self.track_index.get(id).copied()
    }

    pub fn members(&self, playlist: usize) -> &[usize] {
        &self.members[playlist]
    }

    pub fn parents(&self, track: usize) -> &[usize] {
        &self.parents[track]
    }

    /// `r_ps`.
    pub fn contains(&self, playlist: usize, track: usize) -> bool {
        self.members[playlist].binary_search(&track).is_ok()
    }

    pub fn num_edges(&self) -> usize {
        self.members.iter().map(Vec::len).sum()
    }
}

/// Symmetric co-occurrence relation `o_ij`, with `o_ii = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CooccurrenceGraph {
    neighbors: Vec<Vec<usize>>,
}

impl CooccurrenceGraph {
    pub fn num_tracks(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, track: usize) -> &[usize] {
        &self.neighbors[track]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// All ordered pairs `(i, j)` with `o_ij = 1`, in lexicographic order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, ns)| ns.iter().map(move |&j| (i, j)))
    }

    pub fn num_pairs(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }
}

/// `o_ij = 1` iff some playlist contains both `i` and `j`, `i != j`.
pub fn derive_cooccurrence(graph: &InteractionGraph) -> CooccurrenceGraph {
    let mut neighbors = vec![Vec::new(); graph.num_tracks()];
    for row in &graph.members {
        for &i in row {
            neighbors[i].extend(row.iter().copied().filter(|&j| j != i));
        }
    }
    for ns in &mut neighbors {
        ns.sort_unstable();
        ns.dedup();
    }
    CooccurrenceGraph { neighbors }
}
