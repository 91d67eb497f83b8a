//! Line-delimited JSON corpus files.
//!
//! The first non-blank line is a header record; each following line is a
//! track or playlist record tagged with its split:
//!
//! ```text
//! {"kind":"header","format":"relpretrain-corpus","version":1,"d_audio":4,"d_text":8}
//! {"kind":"track","split":"train","id":"s1","audio_feat":[...],"text_feat":[...]}
//! {"kind":"playlist","split":"train","id":"p1","track_ids":["s1"]}
//! ```
//!
//! A track may omit `text_feat` if it carries a caption or metadata; the
//! text feature is then produced by [`hash_featurize`](super::hash_featurize).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{hash_featurize, make_caption, Corpus, Playlist, Pool, Split, Track, TrackMetadata};
use crate::{Error, Result};

pub const CORPUS_FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "relpretrain-corpus";

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
enum Record {
    Header {
        format: String,
        version: u32,
        d_audio: usize,
        d_text: usize,
    },
    Track {
        split: Split,
        id: String,
        audio_feat: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        text_feat: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        caption: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        metadata: Option<TrackMetadata>,
    },
    Playlist {
        split: Split,
        id: String,
        track_ids: Vec<String>,
    },
}

pub fn write_corpus<W: Write>(corpus: &Corpus, mut out: W) -> Result<()> {
    let header = Record::Header {
        format: FORMAT_NAME.into(),
        version: CORPUS_FORMAT_VERSION,
        d_audio: corpus.d_audio(),
        d_text: corpus.d_text(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for split in Split::ALL {
        let pool = corpus.pool(split);
        for t in pool.tracks() {
            let rec = Record::Track {
                split,
                id: t.id.clone(),
                audio_feat: t.audio_feat.clone(),
                text_feat: Some(t.text_feat.clone()),
                caption: t.caption.clone(),
                metadata: t.metadata.clone(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        for p in pool.playlists() {
            let rec = Record::Playlist {
                split,
                id: p.id.clone(),
                track_ids: p.track_ids.clone(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_corpus<R: BufRead>(input: R) -> Result<Corpus> {
    let mut dims: Option<(usize, usize)> = None;
    let mut tracks: [Vec<Track>; 3] = Default::default();
    let mut playlists: [Vec<Playlist>; 3] = Default::default();
    for (lineno, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let where_ = format!("line {}", lineno + 1);
        let rec: Record = serde_json::from_str(&line)
            .map_err(|e| Error::validation(&where_, format!("schema violation: {e}")))?;
        match (rec, dims) {
            (
                Record::Header {
                    format,
                    version,
                    d_audio,
                    d_text,
                },
                None,
            ) => {
                if format != FORMAT_NAME {
                    return Err(Error::validation(
                        where_,
                        format!("unknown format `{format}`"),
                    ));
                }
                if version != CORPUS_FORMAT_VERSION {
                    return Err(Error::Version {
                        found: version,
                        expected: CORPUS_FORMAT_VERSION,
                    });
                }
                dims = Some((d_audio, d_text));
            }
            (Record::Header { .. }, Some(_)) => {
                return Err(Error::validation(where_, "duplicate header record"));
            }
            (_, None) => return Err(Error::validation(where_, "first record must be the header")),
            (
                Record::Track {
                    split,
                    id,
                    audio_feat,
                    text_feat,
                    caption,
                    metadata,
                },
                Some((_, d_text)),
            ) => {
                let text_feat = match (text_feat, &caption, &metadata) {
                    (Some(v), _, _) => v,
                    (None, Some(c), _) => hash_featurize(c, d_text),
                    (None, None, Some(m)) => {
                        let c =
                            make_caption(m).map_err(|e| Error::validation(&id, e.to_string()))?;
                        hash_featurize(&c, d_text)
                    }
                    (None, None, None) => {
                        return Err(Error::validation(
                            &id,
                            "track has neither text_feat nor caption",
                        ));
                    }
                };
                tracks[split as usize].push(Track {
                    id,
                    audio_feat,
                    text_feat,
                    caption,
                    metadata,
                });
            }
            (
                Record::Playlist {
                    split,
                    id,
                    track_ids,
                },
                Some(_),
            ) => {
                playlists[split as usize].push(Playlist { id, track_ids });
            }
        }
    }
    let (d_audio, d_text) =
        dims.ok_or_else(|| Error::validation("<header>", "missing header record"))?;
    let [tr, va, te] = tracks;
    let [ptr, pva, pte] = playlists;
    Corpus::new(
        d_audio,
        d_text,
        Pool::new(tr, ptr),
        Pool::new(va, pva),
        Pool::new(te, pte),
    )
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    write_corpus(corpus, BufWriter::new(File::create(path)?))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    read_corpus(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures;

    fn roundtrip(c: &Corpus) -> Corpus {
        let mut buf = Vec::new();
        write_corpus(c, &mut buf).unwrap();
        read_corpus(buf.as_slice()).unwrap()
    }

    #[test]
    fn round_trip_is_identity() {
        let c = fixtures::tiny();
        assert_eq!(roundtrip(&c), c);
    }

    #[test]
    fn round_trip_preserves_awkward_floats() {
        let mut t = Track::new(
            "a",
            vec![0.1 + 0.2, 1e-300, -7.123456789012345e10],
            vec![1.0 / 3.0],
        );
        t.caption = Some("hello".into());
        let c = Corpus::new(
            3,
            1,
            Pool::new(vec![t], vec![]),
            Pool::default(),
            Pool::default(),
        )
        .unwrap();
        assert_eq!(roundtrip(&c), c);
    }

    #[test]
    fn caption_only_track_gets_hashed_text() {
        let text = concat!(
            r#"{"kind":"header","format":"relpretrain-corpus","version":1,"d_audio":1,"d_text":8}"#,
            "\n",
            r#"{"kind":"track","split":"train","id":"a","audio_feat":[0.5],"metadata":{"track_name":"Love","artist_name":"X","album_name":"Y"}}"#,
            "\n"
        );
        let c = read_corpus(text.as_bytes()).unwrap();
        let t = c.train().track("a").unwrap();
        assert_eq!(
            t.text_feat,
            hash_featurize("The track Love by X on album Y", 8)
        );
    }

    #[test]
    fn duplicate_across_splits_names_id() {
        let text = concat!(
            r#"{"kind":"header","format":"relpretrain-corpus","version":1,"d_audio":1,"d_text":1}"#,
            "\n",
            r#"{"kind":"track","split":"train","id":"dup","audio_feat":[0.5],"text_feat":[1.0]}"#,
            "\n",
            r#"{"kind":"track","split":"test","id":"dup","audio_feat":[0.5],"text_feat":[1.0]}"#,
            "\n"
        );
        match read_corpus(text.as_bytes()).unwrap_err() {
            Error::Validation { id, .. } => assert_eq!(id, "dup"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_reference_and_bad_schema() {
        let text = concat!(
            r#"{"kind":"header","format":"relpretrain-corpus","version":1,"d_audio":1,"d_text":1}"#,
            "\n",
            r#"{"kind":"playlist","split":"train","id":"p","track_ids":["nope"]}"#,
            "\n"
        );
        assert!(
            matches!(read_corpus(text.as_bytes()), Err(Error::Validation { ref id, .. }) if id == "p")
        );
        let bad = r#"{"kind":"track","split":"train"}"#;
        assert!(matches!(
            read_corpus(bad.as_bytes()),
            Err(Error::Validation { .. })
        ));
        let ver =
            r#"{"kind":"header","format":"relpretrain-corpus","version":9,"d_audio":1,"d_text":1}"#;
        assert!(matches!(
            read_corpus(ver.as_bytes()),
            Err(Error::Version { found: 9, .. })
        ));
    }
}
