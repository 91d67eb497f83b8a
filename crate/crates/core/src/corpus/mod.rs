//! Tracks, playlists and the train / validation / test pools they live in.
//!
//! A [`Corpus`] is validated once at construction and immutable afterwards.
//! Track and playlist ids are globally unique and the three pools are
//! disjoint (the cold-start condition): a playlist only references tracks
//! of its own pool.

mod graph;
mod interactions;
mod io;
mod synthetic;
mod text;

pub use graph::{derive_cooccurrence, CooccurrenceGraph, InteractionGraph};
pub use interactions::{
    convert_interaction_log, convert_with_assignment, Interaction, LogConversionParams,
    LogConversionStats,
};
pub use io::{load_corpus, read_corpus, save_corpus, write_corpus, CORPUS_FORMAT_VERSION};
pub use synthetic::{generate_synthetic, GenreLabels, SyntheticParams};
pub use text::{hash_featurize, make_caption};

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackMetadata {
    pub track_name: String,
    pub artist_name: String,
    pub album_name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: String,
    pub audio_feat: Vec<f64>,
    pub text_feat: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<TrackMetadata>,
}

impl Track {
    pub fn new(id: impl Into<String>, audio_feat: Vec<f64>, text_feat: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            audio_feat,
            text_feat,
            caption: None,
            metadata: None,
        }
    }
}

/// A playlist; `track_ids` keeps input order but every algorithm treats it
/// as a set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Playlist {
    pub id: String,
    pub track_ids: Vec<String>,
}

impl Playlist {
    pub fn new(id: impl Into<String>, track_ids: Vec<String>) -> Self {
        Self {
            id: id.into(),
            track_ids,
        }
    }

    pub fn len(&self) -> usize {
        self.track_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.track_ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// The tracks and playlists of one split.
#[derive(Debug, Clone, Default)]
pub struct Pool {
    tracks: Vec<Track>,
    playlists: Vec<Playlist>,
    index: HashMap<String, usize>,
}

impl PartialEq for Pool {
    fn eq(&self, other: &Self) -> bool {
        self.tracks == other.tracks && self.playlists == other.playlists
    }
}

impl Pool {
    pub fn new(tracks: Vec<Track>, playlists: Vec<Playlist>) -> Self {
        let index = tracks
            .iter()
            .enumerate()
            .map(|(i, t)| (t.id.clone(), i))
            .collect();
        Self {
            tracks,
            playlists,
            index,
        }
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn playlists(&self) -> &[Playlist] {
        &self.playlists
    }

    pub fn track(&self, id: &str) -> Option<&Track> {
        self.index.get(id).map(|&i| &self.tracks[i])
    }

    pub fn track_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn track_ids(&self) -> Vec<String> {
        self.tracks.iter().map(|t| t.id.clone()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty() && self.playlists.is_empty()
    }

    pub fn interaction_graph(&self) -> InteractionGraph {
        InteractionGraph::from_pool(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    d_audio: usize,
    d_text: usize,
    train: Pool,
    validation: Pool,
    test: Pool,
}

impl Corpus {
    /// Builds and validates a corpus.
    pub fn new(
        d_audio: usize,
        d_text: usize,
        train: Pool,
        validation: Pool,
        test: Pool,
    ) -> Result<Self> {
        let corpus = Self {
            d_audio,
            d_text,
            train,
            validation,
            test,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn d_audio(&self) -> usize {
        self.d_audio
    }

    pub fn d_text(&self) -> usize {
        self.d_text
    }

    pub fn train(&self) -> &Pool {
        &self.train
    }

    pub fn validation(&self) -> &Pool {
        &self.validation
    }

    pub fn test(&self) -> &Pool {
        &self.test
    }

    pub fn pool(&self, split: Split) -> &Pool {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// Finds a track in any pool.
    pub fn find_track(&self, id: &str) -> Option<(Split, &Track)> {
        Split::ALL
            .into_iter()
            .find_map(|s| self.pool(s).track(id).map(|t| (s, t)))
    }

    fn validate(&self) -> Result<()> {
        if self.d_audio == 0 || self.d_text == 0 {
            return Err(Error::validation(
                "<header>",
                "feature dimensions must be positive",
            ));
        }
        let mut track_owner: HashMap<&str, Split> = HashMap::new();
        let mut playlist_owner: HashMap<&str, Split> = HashMap::new();
        for split in Split::ALL {
            let pool = self.pool(split);
            for t in &pool.tracks {
                validate_id(&t.id)?;
                if t.audio_feat.len() != self.d_audio {
                    return Err(Error::validation(
                        &t.id,
                        format!(
                            "audio_feat has length {} (expected {})",
                            t.audio_feat.len(),
                            self.d_audio
                        ),
                    ));
                }
                if t.text_feat.len() != self.d_text {
                    return Err(Error::validation(
                        &t.id,
                        format!(
                            "text_feat has length {} (expected {})",
                            t.text_feat.len(),
                            self.d_text
                        ),
                    ));
                }
                if t.audio_feat
                    .iter()
                    .chain(&t.text_feat)
                    .any(|x| !x.is_finite())
                {
                    return Err(Error::validation(&t.id, "non-finite feature value"));
                }
                if let Some(prev) = track_owner.insert(&t.id, split) {
                    let reason = if prev == split {
                        format!("duplicate track id in {split} pool")
                    } else {
                        format!(
                            "track appears in both {prev} and {split} pools (cold-start violation)"
                        )
                    };
                    return Err(Error::validation(&t.id, reason));
                }
            }
            for p in &pool.playlists {
                validate_id(&p.id)?;
                if let Some(prev) = playlist_owner.insert(&p.id, split) {
                    let reason = if prev == split {
                        format!("duplicate playlist id in {split} pool")
                    } else {
                        format!("playlist appears in both {prev} and {split} pools (cold-start violation)")
                    };
                    return Err(Error::validation(&p.id, reason));
                }
                let mut seen = HashSet::new();
                for tid in &p.track_ids {
                    if pool.track(tid).is_none() {
                        return Err(Error::validation(
                            &p.id,
                            format!("references track `{tid}` which is not in the {split} pool"),
                        ));
                    }
                    if !seen.insert(tid.as_str()) {
                        return Err(Error::validation(
                            &p.id,
                            format!("track `{tid}` listed twice"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

fn validate_id(id: &str) -> Result<()> {
    if id.is_empty() || id.chars().any(char::is_whitespace) {
        return Err(Error::validation(
            id,
            "ids must be non-empty and contain no whitespace",
        ));
    }
    Ok(())
}
