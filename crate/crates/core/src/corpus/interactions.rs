//! Conversion of a listening log into a cold-start playlist corpus.
//!
//! Each user's listening history becomes one playlist. Users are assigned to
//! train, validation or test; a track already claimed by an earlier split is
//! removed from later ones, and test playlists are restricted to a leading
//! window of the user's history.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, Playlist, Pool, Split, Track};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: String,
    pub track: String,
    pub timestamp: i64,
}

impl Interaction {
    pub fn new(user: impl Into<String>, track: impl Into<String>, timestamp: i64) -> Self {
        Self {
            user: user.into(),
            track: track.into(),
            timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogConversionParams {
    /// Test playlists must have strictly more than `min_len` tracks.
    pub min_len: usize,
    /// Test playlists keep at most the first `max_len` surviving tracks.
    pub max_len: usize,
    pub train_frac: f64,
    pub validation_frac: f64,
    pub seed: u64,
}

impl Default for LogConversionParams {
    fn default() -> Self {
        Self {
            min_len: 30,
            max_len: 99,
            train_frac: 0.8,
            validation_frac: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogConversionStats {
    pub users: usize,
    pub playlists_per_split: [usize; 3],
    /// Users whose playlist ended up empty.
    pub dropped_empty: usize,
    /// Test users rejected by the length window.
    pub dropped_short: usize,
    /// Track memberships removed because an earlier split owns the track.
    pub overlap_removed: usize,
}

/// Randomly assigns users to splits by the configured fractions, then
/// delegates to [`convert_with_assignment`].
pub fn convert_interaction_log(
    log: &[Interaction],
    catalog: &[Track],
    params: &LogConversionParams,
) -> Result<(Corpus, LogConversionStats)> {
    if log.is_empty() {
        return Err(Error::EmptyCorpus("interaction log has no events".into()));
    }
    let fr = [params.train_frac, params.validation_frac];
    if fr.iter().any(|f| !(0.0..=1.0).contains(f)) || fr[0] + fr[1] > 1.0 + 1e-12 {
        return Err(Error::Config(
            "split fractions must lie in [0, 1] and sum to at most 1".into(),
        ));
    }
    let mut users: Vec<&str> = log.iter().map(|i| i.user.as_str()).collect();
    users.sort_unstable();
    users.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    users.shuffle(&mut rng);
    let n = users.len();
    let n_train = (params.train_frac * n as f64).round() as usize;
    let n_val = ((params.validation_frac * n as f64).round() as usize).min(n - n_train.min(n));
    let assignment: BTreeMap<String, Split> = users
        .iter()
        .enumerate()
        .map(|(k, u)| {
            let split = if k < n_train {
                Split::Train
            } else if k < n_train + n_val {
                Split::Validation
            } else {
                Split::Test
            };
            (u.to_string(), split)
        })
        .collect();
    convert_with_assignment(log, catalog, &assignment, params)
}

/// Converts a log under an explicit user-to-split assignment. Users missing
/// from `assignment` are ignored; tracks missing from `catalog` are an
/// unknown-id error.
pub fn convert_with_assignment(
    log: &[Interaction],
    catalog: &[Track],
    assignment: &BTreeMap<String, Split>,
    params: &LogConversionParams,
) -> Result<(Corpus, LogConversionStats)> {
    if log.is_empty() {
        return Err(Error::EmptyCorpus("interaction log has no events".into()));
    }
    let d_audio = catalog.first().map_or(0, |t| t.audio_feat.len());
    let d_text = catalog.first().map_or(0, |t| t.text_feat.len());
    let by_id: HashMap<&str, &Track> = catalog.iter().map(|t| (t.id.as_str(), t)).collect();

    let mut histories: BTreeMap<&str, Vec<&Interaction>> = BTreeMap::new();
    for i in log {
        histories.entry(i.user.as_str()).or_default().push(i);
    }
    let mut stats = LogConversionStats {
        users: histories.len(),
        ..Default::default()
    };

    let mut claimed: HashSet<&str> = HashSet::new();
    let mut pools = Vec::with_capacity(3);
    for split in Split::ALL {
        let mut pool_tracks: Vec<Track> = Vec::new();
        let mut pool_seen: HashSet<&str> = HashSet::new();
        let mut playlists = Vec::new();
        for (&user, events) in &histories {
            if assignment.get(user) != Some(&split) {
                continue;
            }
            let mut events = events.clone();
            events.sort_by_key(|e| e.timestamp);
            let mut seen = HashSet::new();
            let mut members: Vec<&str> = Vec::new();
            for e in events {
                if !seen.insert(e.track.as_str()) {
                    continue;
                }
                if claimed.contains(e.track.as_str()) {
                    stats.overlap_removed += 1;
                    continue;
                }
                members.push(e.track.as_str());
            }
            if split == Split::Test {
                members.truncate(params.max_len);
                if members.len() <= params.min_len {
                    if members.is_empty() {
                        stats.dropped_empty += 1;
                    } else {
                        stats.dropped_short += 1;
                    }
                    continue;
                }
            }
            if members.is_empty() {
                stats.dropped_empty += 1;
                continue;
            }
            for &tid in &members {
                if pool_seen.insert(tid) {
                    let track = by_id
                        .get(tid)
                        .ok_or_else(|| Error::UnknownId(tid.to_string()))?;
                    pool_tracks.push((*track).clone());
                }
            }
            playlists.push(Playlist::new(
                user,
                members.iter().map(|s| s.to_string()).collect(),
            ));
        }
        claimed.extend(pool_seen);
        stats.playlists_per_split[split as usize] = playlists.len();
        pools.push(Pool::new(pool_tracks, playlists));
    }
    let test = pools.pop().expect("three pools");
    let validation = pools.pop().expect("three pools");
    let train = pools.pop().expect("three pools");
    let corpus = Corpus::new(d_audio, d_text, train, validation, test)?;
    Ok((corpus, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog(ids: &[&str]) -> Vec<Track> {
        ids.iter()
            .map(|id| Track::new(*id, vec![1.0], vec![0.5]))
            .collect()
    }

    fn assign(pairs: &[(&str, Split)]) -> BTreeMap<String, Split> {
        pairs.iter().map(|(u, s)| (u.to_string(), *s)).collect()
    }

    #[test]
    fn single_train_user() {
        let log: Vec<_> = ["a", "b", "c", "d", "e"]
            .iter()
            .enumerate()
            .map(|(k, t)| Interaction::new("u", *t, k as i64))
            .collect();
        let (c, _) = convert_with_assignment(
            &log,
            &catalog(&["a", "b", "c", "d", "e"]),
            &assign(&[("u", Split::Train)]),
            &LogConversionParams::default(),
        )
        .unwrap();
        assert_eq!(c.train().playlists().len(), 1);
        assert_eq!(c.train().playlists()[0].len(), 5);
    }

    #[test]
    fn later_split_loses_shared_tracks() {
        let log = vec![
            Interaction::new("A", "x", 0),
            Interaction::new("A", "y", 1),
            Interaction::new("B", "y", 0),
            Interaction::new("B", "z", 1),
        ];
        let params = LogConversionParams {
            min_len: 0,
            ..Default::default()
        };
        let (c, stats) = convert_with_assignment(
            &log,
            &catalog(&["x", "y", "z"]),
            &assign(&[("A", Split::Train), ("B", Split::Test)]),
            &params,
        )
        .unwrap();
        assert_eq!(c.test().playlists()[0].track_ids, vec!["z".to_string()]);
        assert_eq!(stats.overlap_removed, 1);
    }

    #[test]
    fn short_test_user_is_excluded() {
        let log = vec![Interaction::new("B", "y", 0), Interaction::new("B", "z", 1)];
        let (c, stats) = convert_with_assignment(
            &log,
            &catalog(&["y", "z"]),
            &assign(&[("B", Split::Test)]),
            &LogConversionParams::default(),
        )
        .unwrap();
        assert!(c.test().playlists().is_empty());
        assert_eq!(stats.dropped_short, 1);
    }

    #[test]
    fn test_window_and_dedup() {
        let mut log: Vec<_> = (0..10)
            .map(|k| Interaction::new("B", format!("t{k}"), 10 - k))
            .collect();
        log.push(Interaction::new("B", "t9", 100));
        let ids: Vec<String> = (0..10).map(|k| format!("t{k}")).collect();
        let cat: Vec<Track> = ids
            .iter()
            .map(|id| Track::new(id.clone(), vec![1.0], vec![0.5]))
            .collect();
        let params = LogConversionParams {
            min_len: 2,
            max_len: 4,
            ..Default::default()
        };
        let (c, _) =
            convert_with_assignment(&log, &cat, &assign(&[("B", Split::Test)]), &params).unwrap();
        // earliest timestamps first: t9 (1), t8 (2), ...
        assert_eq!(
            c.test().playlists()[0].track_ids,
            vec!["t9", "t8", "t7", "t6"]
        );
        assert_eq!(c.test().tracks().len(), 4);
    }

    #[test]
    fn empty_log_and_unknown_track() {
        assert!(matches!(
            convert_interaction_log(&[], &[], &LogConversionParams::default()),
            Err(Error::EmptyCorpus(_))
        ));
        let log = vec![Interaction::new("A", "ghost", 0)];
        let err = convert_with_assignment(
            &log,
            &catalog(&["x"]),
            &assign(&[("A", Split::Train)]),
            &Default::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownId(_)));
    }

    #[test]
    fn random_split_keeps_tracks_disjoint() {
        let mut log = Vec::new();
        for u in 0..40 {
            for k in 0..50 {
                log.push(Interaction::new(
                    format!("u{u}"),
                    format!("t{}", (u * 7 + k * 3) % 120),
                    k,
                ));
            }
        }
        let ids: Vec<String> = (0..120).map(|k| format!("t{k}")).collect();
        let cat: Vec<Track> = ids
            .iter()
            .map(|id| Track::new(id.clone(), vec![1.0], vec![0.5]))
            .collect();
        let params = LogConversionParams {
            min_len: 0,
            seed: 3,
            ..Default::default()
        };
        let (c, stats) = convert_interaction_log(&log, &cat, &params).unwrap();
        assert_eq!(stats.users, 40);
        let train: HashSet<_> = c.train().track_ids().into_iter().collect();
        for t in c
            .validation()
            .track_ids()
            .into_iter()
            .chain(c.test().track_ids())
        {
            assert!(!train.contains(&t));
        }
    }
}
