use super::TrackMetadata;
use crate::{Error, Result};

/// `"The track {track} by {artist} on album {album}"`.
pub fn make_caption(metadata: &TrackMetadata) -> Result<String> {
    let fields = [
        ("track_name", &metadata.track_name),
        ("artist_name", &metadata.artist_name),
        ("album_name", &metadata.album_name),
    ];
    for (name, value) in fields {
        if value.trim().is_empty() {
            return Err(Error::CaptionIncomplete(name));
        }
    }
    Ok(format!(
        "The track {} by {} on album {}",
        metadata.track_name, metadata.artist_name, metadata.album_name
    ))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Bag-of-tokens hashed into `dim` buckets, then L2-normalized.
///
/// Tokens are maximal alphanumeric runs, lowercased. Text with no tokens maps
/// to the zero vector.
pub fn hash_featurize(text: &str, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    if dim == 0 {
        return out;
    }
    for token in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let bucket = (fnv1a(token.to_lowercase().as_bytes()) % dim as u64) as usize;
        out[bucket] += 1.0;
    }
    let norm = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        out.iter_mut().for_each(|x| *x /= norm);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(t: &str, a: &str, b: &str) -> TrackMetadata {
        TrackMetadata {
            track_name: t.into(),
            artist_name: a.into(),
            album_name: b.into(),
        }
    }

    #[test]
    fn caption_template() {
        assert_eq!(
            make_caption(&meta("Love", "X", "Y")).unwrap(),
            "The track Love by X on album Y"
        );
        assert_eq!(
            make_caption(&meta("A", "B", "C")).unwrap(),
            "The track A by B on album C"
        );
    }

    #[test]
    fn caption_rejects_empty_field() {
        assert!(matches!(
            make_caption(&meta("", "B", "C")),
            Err(Error::CaptionIncomplete("track_name"))
        ));
        assert!(matches!(
            make_caption(&meta("A", "B", " ")),
            Err(Error::CaptionIncomplete("album_name"))
        ));
    }

    #[test]
    fn featurizer_is_deterministic_and_normalized() {
        let a = hash_featurize("The track Love by X on album Y", 16);
        let b = hash_featurize("the TRACK love by x on album y", 16);
        assert_eq!(a, b);
        let n: f64 = a.iter().map(|x| x * x).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert!(hash_featurize("  ,, ", 8).iter().all(|x| *x == 0.0));
    }
}
