//! Planted-cluster corpora for desk-scale experiments.

use std::collections::{BTreeMap, HashSet};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Corpus, Playlist, Pool, Track};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub n_genres: usize,
    pub train_tracks: usize,
    pub validation_tracks: usize,
    pub test_tracks: usize,
    pub train_playlists: usize,
    pub validation_playlists: usize,
    pub test_playlists: usize,
    pub tracks_per_playlist: usize,
    /// Probability that a playlist slot is drawn from the home genre.
    pub purity: f64,
    pub noise_sigma: f64,
    pub d_audio: usize,
    pub d_text: usize,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            n_genres: 8,
            train_tracks: 2000,
            validation_tracks: 200,
            test_tracks: 200,
            train_playlists: 400,
            validation_playlists: 40,
            test_playlists: 40,
            tracks_per_playlist: 20,
            purity: 0.9,
            noise_sigma: 1.0,
            d_audio: 32,
            d_text: 32,
            seed: 1,
        }
    }
}

impl SyntheticParams {
    fn check(&self) -> Result<()> {
        if self.n_genres == 0 || self.train_tracks == 0 || self.tracks_per_playlist == 0 {
            return Err(Error::Config(
                "n_genres, train_tracks and tracks_per_playlist must be positive".into(),
            ));
        }
        if self.d_audio == 0 || self.d_text == 0 {
            return Err(Error::Config("feature dimensions must be positive".into()));
        }
        if !(0.5..=1.0).contains(&self.purity) {
            return Err(Error::Config(format!(
                "purity {} outside [0.5, 1]",
                self.purity
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma {} must be non-negative",
                self.noise_sigma
            )));
        }
        for (name, tracks, playlists) in [
            ("train", self.train_tracks, self.train_playlists),
            (
                "validation",
                self.validation_tracks,
                self.validation_playlists,
            ),
            ("test", self.test_tracks, self.test_playlists),
        ] {
            if playlists > 0 && self.tracks_per_playlist > tracks {
                return Err(Error::Infeasible(format!(
                    "tracks_per_playlist {} exceeds the {} {name} tracks",
                    self.tracks_per_playlist, tracks
                )));
            }
        }
        Ok(())
    }
}

/// Ground-truth genre of every generated track.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GenreLabels {
    labels: BTreeMap<String, usize>,
}

impl GenreLabels {
    pub fn genre(&self, track_id: &str) -> Option<usize> {
        self.labels.get(track_id).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.labels.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

struct Centers {
    audio: Vec<Vec<f64>>,
    text: Vec<Vec<f64>>,
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn make_pool(
    prefix: &str,
    n_tracks: usize,
    n_playlists: usize,
    params: &SyntheticParams,
    centers: &Centers,
    rng: &mut ChaCha8Rng,
    labels: &mut GenreLabels,
) -> Pool {
    let g = params.n_genres;
    let sigma = params.noise_sigma;
    let mut by_genre = vec![Vec::new(); g];
    let tracks: Vec<Track> = (0..n_tracks)
        .map(|i| {
            let genre = i % g;
            let id = format!("{prefix}-s{i:05}");
            let audio = centers.audio[genre]
                .iter()
                .map(|c| c + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let text = centers.text[genre]
                .iter()
                .map(|c| c + sigma * rng.sample::<f64, _>(StandardNormal))
                .collect();
            by_genre[genre].push(i);
            labels.labels.insert(id.clone(), genre);
            Track::new(id, audio, text)
        })
        .collect();

    let playlists = (0..n_playlists)
        .map(|pi| {
            let home = rng.random_range(0..g);
            let mut used = HashSet::with_capacity(params.tracks_per_playlist);
            let mut members = Vec::with_capacity(params.tracks_per_playlist);
            for _ in 0..params.tracks_per_playlist {
                let genre = if g == 1 || rng.random::<f64>() < params.purity {
                    home
                } else {
                    let k = rng.random_range(0..g - 1);
                    if k >= home {
                        k + 1
                    } else {
                        k
                    }
                };
                let candidates: Vec<usize> = by_genre[genre]
                    .iter()
                    .copied()
                    .filter(|t| !used.contains(t))
                    .collect();
                let pick = match candidates.choose(rng) {
                    Some(&t) => t,
                    None => {
                        let rest: Vec<usize> =
                            (0..n_tracks).filter(|t| !used.contains(t)).collect();
                        *rest.choose(rng).expect("feasibility checked up front")
                    }
                };
                used.insert(pick);
                members.push(tracks[pick].id.clone());
            }
            Playlist::new(format!("{prefix}-p{pi:05}"), members)
        })
        .collect();
    Pool::new(tracks, playlists)
}

/// Generates a corpus whose playlists are planted around latent genres.
///
/// Track `i` of each pool belongs to genre `i % n_genres`. Each genre has one
/// audio center and one text center; track features are the center plus
/// isotropic Gaussian noise.
pub fn generate_synthetic(params: &SyntheticParams) -> Result<(Corpus, GenreLabels)> {
    params.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let centers = Centers {
        audio: (0..params.n_genres)
            .map(|_| gaussian_vec(&mut rng, params.d_audio))
            .collect(),
        text: (0..params.n_genres)
            .map(|_| gaussian_vec(&mut rng, params.d_text))
            .collect(),
    };
    let mut labels = GenreLabels::default();
    let train = make_pool(
        "tr",
        params.train_tracks,
        params.train_playlists,
        params,
        &centers,
        &mut rng,
        &mut labels,
    );
    let validation = make_pool(
        "va",
        params.validation_tracks,
        params.validation_playlists,
        params,
        &centers,
        &mut rng,
        &mut labels,
    );
    let test = make_pool(
        "te",
        params.test_tracks,
        params.test_playlists,
        params,
        &centers,
        &mut rng,
        &mut labels,
    );
    let corpus = Corpus::new(params.d_audio, params.d_text, train, validation, test)?;
    Ok((corpus, labels))
}
