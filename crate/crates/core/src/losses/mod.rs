//! Contrastive objectives: the bidirectional contrast primitive, the three
//! relational losses built on it, the self-attention playlist encoder, and
//! the per-stage objective.

mod contrast;
mod fusion;
mod relational;

pub use contrast::{contrast, diagonal_targets, ContrastBatch, ContrastGrads};
pub use fusion::{fuse_playlist, Fusion, FusionForward, FusionParams};
pub use relational::{
    relational_contrast, relational_targets, tpc_loss, ttc_loss, wtc_embeddings, wtc_loss, Encoded,
    Features, Negatives, PairGrads, RelationalGrads, TpcOutcome, TpcSample,
};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Training stage. Stage 1 optimizes WTC, stage 2 adds TTC, stage 3 adds
/// TPC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Stage {
    One,
    Two,
    Three,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::One, Stage::Two, Stage::Three];

    pub fn number(self) -> u8 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
            Stage::Three => 3,
        }
    }

    pub fn uses_ttc(self) -> bool {
        self >= Stage::Two
    }

    pub fn uses_tpc(self) -> bool {
        self == Stage::Three
    }
}

impl TryFrom<u8> for Stage {
    type Error = Error;

    fn try_from(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Stage::One),
            2 => Ok(Stage::Two),
            3 => Ok(Stage::Three),
            other => Err(Error::Config(format!(
                "stage must be 1, 2 or 3, got {other}"
            ))),
        }
    }
}

impl From<Stage> for u8 {
    fn from(s: Stage) -> u8 {
        s.number()
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageComponents {
    pub wtc: Option<f64>,
    pub ttc: Option<f64>,
    pub tpc: Option<f64>,
}

/// Unweighted sum of the components the stage uses.
pub fn stage_objective(stage: Stage, c: &StageComponents) -> Result<f64> {
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| Error::Config(format!("stage {stage} needs the {name} component")))
    };
    let mut total = need(c.wtc, "wtc")?;
    if stage.uses_ttc() {
        total += need(c.ttc, "ttc")?;
    }
    if stage.uses_tpc() {
        total += need(c.tpc, "tpc")?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn objective_sums_components() {
        let one = StageComponents {
            wtc: Some(0.5),
            ..Default::default()
        };
        assert_eq!(stage_objective(Stage::One, &one).unwrap(), 0.5);
        let all = StageComponents {
            wtc: Some(0.1),
            ttc: Some(0.2),
            tpc: Some(0.3),
        };
        assert!((stage_objective(Stage::Three, &all).unwrap() - 0.6).abs() < 1e-15);
        assert!(matches!(
            stage_objective(Stage::Two, &one),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn stage_serializes_as_number() {
        assert_eq!(serde_json::to_string(&Stage::Two).unwrap(), "2");
        assert_eq!(serde_json::from_str::<Stage>("3").unwrap(), Stage::Three);
        assert!(serde_json::from_str::<Stage>("4").is_err());
    }
}
