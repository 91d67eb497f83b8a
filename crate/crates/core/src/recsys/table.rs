use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::{ArrayView1, Axis};

use super::{unify_with, Pooling};
use crate::corpus::Track;
use crate::encoder::{EncoderState, Modality};
use crate::numkit::{normalize_rows, Matrix};
use crate::{Error, Result};

/// Per-track vectors in a fixed id order.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    ids: Vec<String>,
    vectors: Matrix,
    index: HashMap<String, usize>,
}

impl PartialEq for EmbeddingTable {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids && self.vectors == other.vectors
    }
}

impl EmbeddingTable {
    pub fn new(ids: Vec<String>, vectors: Matrix) -> Result<Self> {
        if ids.len() != vectors.nrows() {
            return Err(Error::Shape(format!(
                "{} ids for {} embedding rows",
                ids.len(),
                vectors.nrows()
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if id.is_empty() || id.chars().any(char::is_whitespace) {
                return Err(Error::MalformedInput(format!(
                    "invalid embedding id `{id}`"
                )));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::MalformedInput(format!(
                    "duplicate embedding id `{id}`"
                )));
            }
        }
        Ok(Self {
            ids,
            vectors,
            index,
        })
    }

    /// Unified representations of `tracks` under a trained encoder.
    pub fn from_encoder(
        encoder: &EncoderState,
        tracks: &[Track],
        pooling: Pooling,
    ) -> Result<Self> {
        let (xa, xt) = feature_matrices(tracks)?;
        let a = encoder.embed(Modality::Audio, &xa)?;
        let t = encoder.embed(Modality::Text, &xt)?;
        let mut out = Matrix::zeros(a.dim());
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            row.assign(&unify_with(a.row(i), t.row(i), pooling)?);
        }
        Self::new(tracks.iter().map(|t| t.id.clone()).collect(), out)
    }

    /// Raw features of one modality, L2-normalized per row.
    pub fn from_features(tracks: &[Track], modality: Modality) -> Result<Self> {
        let (xa, xt) = feature_matrices(tracks)?;
        let x = match modality {
            Modality::Audio => xa,
            Modality::Text => xt,
        };
        Self::new(
            tracks.iter().map(|t| t.id.clone()).collect(),
            normalize_rows(x.view())?.0,
        )
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &Matrix {
        &self.vectors
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn row(&self, id: &str) -> Result<ArrayView1<'_, f64>> {
        let i = self
            .index_of(id)
            .ok_or_else(|| Error::UnknownId(id.to_string()))?;
        Ok(self.vectors.row(i))
    }

    /// Sub-table restricted to `ids`, in the given order.
    pub fn subset<S: AsRef<str>>(&self, ids: &[S]) -> Result<Self> {
        let rows = ids
            .iter()
            .map(|id| {
                self.index_of(id.as_ref())
                    .ok_or_else(|| Error::UnknownId(id.as_ref().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            ids.iter().map(|s| s.as_ref().to_string()).collect(),
            self.vectors.select(Axis(0), &rows),
        )
    }

    /// `n d` header, then one `id<TAB>v1<TAB>…` line per row. Numbers use
    /// the shortest representation that parses back to the same `f64`.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim())?;
        for (id, row) in self.ids.iter().zip(self.vectors.rows()) {
            out.write_all(id.as_bytes())?;
            for v in row {
                write!(out, "\t{v}")?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::MalformedInput("empty embedding file".into()))??;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|s| {
                s.parse()
                    .map_err(|_| Error::MalformedInput(format!("bad header `{header}`")))
            })
            .collect::<Result<_>>()?;
        let [n, d] = dims[..] else {
            return Err(Error::MalformedInput(format!("bad header `{header}`")));
        };
        let mut ids = Vec::with_capacity(n);
        let mut data = Vec::with_capacity(n * d);
        for (k, line) in lines.enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let id = fields.next().unwrap_or_default().to_string();
            let before = data.len();
            for f in fields {
                data.push(f.parse::<f64>().map_err(|_| {
                    Error::MalformedInput(format!("line {}: bad number `{f}`", k + 2))
                })?);
            }
            if data.len() - before != d {
                return Err(Error::MalformedInput(format!(
                    "line {}: expected {d} values for `{id}`",
                    k + 2
                )));
            }
            ids.push(id);
        }
        if ids.len() != n {
            return Err(Error::MalformedInput(format!(
                "header promises {n} rows, found {}",
                ids.len()
            )));
        }
        let vectors =
            Matrix::from_shape_vec((n, d), data).map_err(|e| Error::Shape(e.to_string()))?;
        Self::new(ids, vectors)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// Stacks the raw audio and text features of `tracks` row-wise.
pub fn feature_matrices(tracks: &[Track]) -> Result<(Matrix, Matrix)> {
    let da = tracks.first().map_or(0, |t| t.audio_feat.len());
    let dt = tracks.first().map_or(0, |t| t.text_feat.len());
    let mut a = Matrix::zeros((tracks.len(), da));
    let mut t = Matrix::zeros((tracks.len(), dt));
    for (i, tr) in tracks.iter().enumerate() {
        if tr.audio_feat.len() != da || tr.text_feat.len() != dt {
            return Err(Error::Shape(format!(
                "track `{}` has inconsistent feature widths",
                tr.id
            )));
        }
        a.row_mut(i).assign(&ArrayView1::from(&tr.audio_feat[..]));
        t.row_mut(i).assign(&ArrayView1::from(&tr.text_feat[..]));
    }
    Ok((a, t))
}
