//! The dual encoder: one MLP branch per modality projecting raw features to
//! a shared unit sphere, an EMA momentum copy feeding a FIFO negative queue,
//! and the per-track lookup tables used by the playlist-level loss.
//!
//! Branch layout is `Linear -> tanh -> ... -> Linear -> L2 normalize`, with
//! widths `[D, hidden.., d_embed]`.

mod queue;
mod table;

pub use queue::{MomentumEmbeddings, NegativeQueue};
pub use table::{LookupTables, TableRows};

use std::fs;
use std::path::Path;

use ndarray::ArrayView1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Track;
use crate::numkit::{
    normalize_rows, normalize_rows_backward, Activation, Matrix, Mlp, MlpCache, ParamTensor,
    Parameterized, Vector,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub d_audio: usize,
    pub d_text: usize,
    pub hidden: Vec<usize>,
    pub d_embed: usize,
    pub momentum: f64,
    pub queue_capacity: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_audio: 32,
            d_text: 32,
            hidden: vec![128],
            d_embed: 256,
            momentum: 0.995,
            queue_capacity: 1024,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_audio == 0 || self.d_text == 0 || self.d_embed == 0 || self.hidden.contains(&0) {
            return Err(Error::Config("encoder widths must be positive".into()));
        }
        if !(self.momentum > 0.0 && self.momentum < 1.0) {
            return Err(Error::Config(format!(
                "momentum {} outside (0, 1)",
                self.momentum
            )));
        }
        if self.queue_capacity == 0 {
            return Err(Error::Config("queue_capacity must be positive".into()));
        }
        Ok(())
    }

    fn dims(&self, modality: Modality) -> Vec<usize> {
        let input = match modality {
            Modality::Audio => self.d_audio,
            Modality::Text => self.d_text,
        };
        std::iter::once(input)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(self.d_embed))
            .collect()
    }
}

/// Output of a trainable forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct BranchForward {
    /// Unit-normalized embeddings, one row per input.
    pub out: Matrix,
    norms: Vector,
    cache: MlpCache,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderState {
    config: EncoderConfig,
    audio: Mlp,
    text: Mlp,
    audio_momentum: Mlp,
    text_momentum: Mlp,
    queue: NegativeQueue,
    tables: LookupTables,
}

impl EncoderState {
    /// Random branches; the momentum copy starts as an exact clone, the
    /// queue empty and every table row cold.
    pub fn new<R: Rng + ?Sized>(
        config: EncoderConfig,
        train_ids: Vec<String>,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let audio = Mlp::random(&config.dims(Modality::Audio), Activation::Tanh, rng)?;
        let text = Mlp::random(&config.dims(Modality::Text), Activation::Tanh, rng)?;
        Self::from_branches(config, audio, text, train_ids)
    }

    pub fn from_branches(
        config: EncoderConfig,
        audio: Mlp,
        text: Mlp,
        train_ids: Vec<String>,
    ) -> Result<Self> {
        config.validate()?;
        for (m, mlp) in [(Modality::Audio, &audio), (Modality::Text, &text)] {
            let dims = config.dims(m);
            if mlp.input_dim() != dims[0] || mlp.output_dim() != config.d_embed {
                return Err(Error::Shape(format!(
                    "{m:?} branch maps {} -> {}, config expects {} -> {}",
                    mlp.input_dim(),
                    mlp.output_dim(),
                    dims[0],
                    config.d_embed
                )));
            }
        }
        Ok(Self {
            queue: NegativeQueue::new(config.queue_capacity),
            tables: LookupTables::new(train_ids, config.d_embed),
            audio_momentum: audio.clone(),
            text_momentum: text.clone(),
            audio,
            text,
            config,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn branch(&self, modality: Modality) -> &Mlp {
        match modality {
            Modality::Audio => &self.audio,
            Modality::Text => &self.text,
        }
    }

    pub fn momentum_branch(&self, modality: Modality) -> &Mlp {
        match modality {
            Modality::Audio => &self.audio_momentum,
            Modality::Text => &self.text_momentum,
        }
    }

    fn branch_mut(&mut self, modality: Modality) -> &mut Mlp {
        match modality {
            Modality::Audio => &mut self.audio,
            Modality::Text => &mut self.text,
        }
    }

    /// Trainable forward pass over a row batch of raw features.
    pub fn forward(&self, modality: Modality, x: &Matrix) -> Result<BranchForward> {
        let (raw, cache) = self.branch(modality).forward_cached(x)?;
        let (out, norms) = normalize_rows(raw.view())?;
        Ok(BranchForward { out, norms, cache })
    }

    /// Accumulates parameter gradients of the branch given `dL/d out`.
    pub fn backward(&mut self, modality: Modality, fwd: &BranchForward, grad_out: &Matrix) {
        let grad_raw = normalize_rows_backward(&fwd.out, &fwd.norms, grad_out);
        self.branch_mut(modality).backward(&fwd.cache, &grad_raw);
    }

    /// Inference-only embedding of a row batch.
    pub fn embed(&self, modality: Modality, x: &Matrix) -> Result<Matrix> {
        let raw = self.branch(modality).forward(x)?;
        Ok(normalize_rows(raw.view())?.0)
    }

    /// Unit-length audio and text embeddings of one track.
    pub fn encode(&self, track: &Track) -> Result<(Vector, Vector)> {
        let row = |v: &[f64]| Matrix::from_shape_vec((1, v.len()), v.to_vec()).expect("row shape");
        let a = self.embed(Modality::Audio, &row(&track.audio_feat))?;
        let t = self.embed(Modality::Text, &row(&track.text_feat))?;
        Ok((a.row(0).to_owned(), t.row(0).to_owned()))
    }

    /// Embeds a batch with the momentum copy.
    pub fn momentum_encode(&self, xa: &Matrix, xt: &Matrix) -> Result<MomentumEmbeddings> {
        let audio = normalize_rows(self.audio_momentum.forward(xa)?.view())?.0;
        let text = normalize_rows(self.text_momentum.forward(xt)?.view())?.0;
        if audio.nrows() != text.nrows() {
            return Err(Error::Shape(
                "audio and text batches differ in length".into(),
            ));
        }
        Ok(MomentumEmbeddings { audio, text })
    }

    /// `θ_m ← m θ_m + (1 - m) θ` for every parameter.
    pub fn momentum_update(&mut self) {
        let m = self.config.momentum;
        self.audio_momentum.ema_from(&self.audio, m);
        self.text_momentum.ema_from(&self.text, m);
    }

    pub fn queue(&self) -> &NegativeQueue {
        &self.queue
    }

    pub fn queue_push(&mut self, batch: &MomentumEmbeddings) {
        self.queue.push(batch);
    }

    pub fn queue_negatives(&self, count: usize) -> (Matrix, Matrix) {
        self.queue.negatives(count, self.config.d_embed)
    }

    pub fn tables(&self) -> &LookupTables {
        &self.tables
    }

    pub fn table_update(
        &mut self,
        track_id: &str,
        a: ArrayView1<f64>,
        t: ArrayView1<f64>,
    ) -> Result<()> {
        self.tables.update(track_id, a, t)
    }

    pub fn table_update_row(
        &mut self,
        row: usize,
        a: ArrayView1<f64>,
        t: ArrayView1<f64>,
    ) -> Result<()> {
        self.tables.update_row(row, a, t)
    }

    pub fn table_lookup<S: AsRef<str>>(&self, ids: &[S]) -> Result<TableRows> {
        self.tables.lookup(ids)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let state: Self = serde_json::from_slice(bytes)?;
        state.check()?;
        Ok(state)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read(path)?)
    }

    fn check(&self) -> Result<()> {
        self.config.validate()?;
        if !self.audio.same_shape(&self.audio_momentum)
            || !self.text.same_shape(&self.text_momentum)
        {
            return Err(Error::Shape(
                "momentum copy does not mirror the trainable branches".into(),
            ));
        }
        if self.tables.dim() != self.config.d_embed {
            return Err(Error::Shape("lookup tables have the wrong width".into()));
        }
        self.queue.check(self.config.d_embed)
    }
}

impl Parameterized for EncoderState {
    fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut p = self.audio.params_mut();
        p.extend(self.text.params_mut());
        p
    }
}
