use std::collections::VecDeque;

use ndarray::Axis;
use serde::{Deserialize, Serialize};

use crate::numkit::{Matrix, Vector};
use crate::{Error, Result};

/// Unit-normalized outputs of the momentum copy. Only
/// [`EncoderState::momentum_encode`](super::EncoderState::momentum_encode)
/// produces values of this type, so the queue can only ever hold momentum
/// outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumEmbeddings {
    pub(super) audio: Matrix,
    pub(super) text: Matrix,
}

impl MomentumEmbeddings {
    pub fn audio(&self) -> &Matrix {
        &self.audio
    }

    pub fn text(&self) -> &Matrix {
        &self.text
    }

    pub fn len(&self) -> usize {
        self.audio.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.audio.nrows() == 0
    }

    /// Keeps only the given rows.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            audio: self.audio.select(Axis(0), rows),
            text: self.text.select(Axis(0), rows),
        }
    }
}

/// Paired FIFO of audio / text negatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativeQueue {
    capacity: usize,
    audio: VecDeque<Vector>,
    text: VecDeque<Vector>,
}

impl NegativeQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            audio: VecDeque::with_capacity(capacity),
            text: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.audio.len()
    }

    pub fn is_empty(&self) -> bool {
        self.audio.is_empty()
    }

    /// Appends every row, evicting the oldest entries beyond capacity.
    pub fn push(&mut self, batch: &MomentumEmbeddings) {
        for (a, t) in batch.audio.rows().into_iter().zip(batch.text.rows()) {
            if self.audio.len() == self.capacity {
                self.audio.pop_front();
                self.text.pop_front();
            }
            self.audio.push_back(a.to_owned());
            self.text.push_back(t.to_owned());
        }
    }

    /// The `count` most recent entries in insertion order, or all of them
    /// if fewer are stored.
    pub fn negatives(&self, count: usize, dim: usize) -> (Matrix, Matrix) {
        let n = count.min(self.len());
        let start = self.len() - n;
        let gather = |q: &VecDeque<Vector>| {
            let mut m = Matrix::zeros((n, dim));
            for (mut row, v) in m.rows_mut().into_iter().zip(q.range(start..)) {
                row.assign(v);
            }
            m
        };
        (gather(&self.audio), gather(&self.text))
    }

    pub(super) fn check(&self, dim: usize) -> Result<()> {
        if self.audio.len() != self.text.len() || self.audio.len() > self.capacity {
            return Err(Error::MalformedInput(
                "queue halves are misaligned or over capacity".into(),
            ));
        }
        if self.audio.iter().chain(&self.text).any(|v| v.len() != dim) {
            return Err(Error::Shape("queue entry has the wrong width".into()));
        }
        Ok(())
    }
}
