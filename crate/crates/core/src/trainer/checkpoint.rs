use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoder::EncoderState;
use crate::losses::{Fusion, Stage};
use crate::Result;

/// Everything a later stage needs: the encoder (with momentum copy, queue
/// and tables) and the fusion weights once stage 3 has created them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    /// Last completed stage, `None` for an untrained encoder.
    pub stage: Option<Stage>,
    pub encoder: EncoderState,
    pub fusion: Option<Fusion>,
}

impl Checkpoint {
    pub fn new(encoder: EncoderState) -> Self {
        Self {
            stage: None,
            encoder,
            fusion: None,
        }
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let c: Checkpoint = serde_json::from_slice(bytes)?;
        // re-validates the encoder invariants
        let encoder = EncoderState::from_json(&serde_json::to_vec(&c.encoder)?)?;
        Ok(Self { encoder, ..c })
    }

    /// Hex SHA-256 of the serialized parameters, queue and tables. The stage
    /// tag is excluded so a stage's output and the next stage's input hash
    /// equal.
    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.encoder)?);
        h.update(serde_json::to_vec(&self.fusion)?);
        Ok(hex::encode(h.finalize()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read(path)?)
    }
}
