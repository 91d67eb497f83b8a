use std::collections::HashMap;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use crate::numkit::Matrix;
use crate::{Error, Result};

/// Rows fetched from the lookup tables. `cold[i]` is set when row `i` has
/// never been written and is therefore all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRows {
    pub audio: Matrix,
    pub text: Matrix,
    pub cold: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct StoredTables {
    ids: Vec<String>,
    audio: Matrix,
    text: Matrix,
    warm: Vec<bool>,
}

/// Latest audio and text representation of every training track. Reads
/// are plain copies; nothing read from here carries a gradient.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "StoredTables", into = "StoredTables")]
pub struct LookupTables {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    audio: Matrix,
    text: Matrix,
    warm: Vec<bool>,
}

impl PartialEq for LookupTables {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids
            && self.audio == other.audio
            && self.text == other.text
            && self.warm == other.warm
    }
}

impl TryFrom<StoredTables> for LookupTables {
    type Error = Error;

    fn try_from(s: StoredTables) -> Result<Self> {
        let n = s.ids.len();
        if s.audio.nrows() != n
            || s.text.nrows() != n
            || s.warm.len() != n
            || s.audio.dim() != s.text.dim()
        {
            return Err(Error::Shape(
                "lookup table rows disagree with id list".into(),
            ));
        }
        let index = s
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Ok(Self {
            ids: s.ids,
            index,
            audio: s.audio,
            text: s.text,
            warm: s.warm,
        })
    }
}

impl From<LookupTables> for StoredTables {
    fn from(t: LookupTables) -> Self {
        Self {
            ids: t.ids,
            audio: t.audio,
            text: t.text,
            warm: t.warm,
        }
    }
}

impl LookupTables {
    pub fn new(ids: Vec<String>, dim: usize) -> Self {
        let n = ids.len();
        let index = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Self {
            ids,
            index,
            audio: Matrix::zeros((n, dim)),
            text: Matrix::zeros((n, dim)),
            warm: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.audio.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn is_cold(&self, row: usize) -> bool {
        !self.warm[row]
    }

    pub fn audio(&self) -> &Matrix {
        &self.audio
    }

    pub fn text(&self) -> &Matrix {
        &self.text
    }

    pub fn update_row(
        &mut self,
        row: usize,
        audio: ArrayView1<f64>,
        text: ArrayView1<f64>,
    ) -> Result<()> {
        if row >= self.len() {
            return Err(Error::UnknownId(format!("table row {row}")));
        }
        if audio.len() != self.dim() || text.len() != self.dim() {
            return Err(Error::Shape(format!(
                "table rows have width {}, got {} / {}",
                self.dim(),
                audio.len(),
                text.len()
            )));
        }
        if audio.iter().chain(text.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!(
                "table update for `{}`",
                self.ids[row]
            )));
        }
        self.audio.row_mut(row).assign(&audio);
        self.text.row_mut(row).assign(&text);
        self.warm[row] = true;
        Ok(())
    }

    pub fn update(
        &mut self,
        id: &str,
        audio: ArrayView1<f64>,
        text: ArrayView1<f64>,
    ) -> Result<()> {
        let row = self.index_of(id)?;
        self.update_row(row, audio, text)
    }

    pub fn lookup_rows(&self, rows: &[usize]) -> TableRows {
        TableRows {
            audio: self.audio.select(ndarray::Axis(0), rows),
            text: self.text.select(ndarray::Axis(0), rows),
            cold: rows.iter().map(|&r| !self.warm[r]).collect(),
        }
    }

    pub fn lookup<S: AsRef<str>>(&self, ids: &[S]) -> Result<TableRows> {
        let rows = ids
            .iter()
            .map(|id| self.index_of(id.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.lookup_rows(&rows))
    }
}
