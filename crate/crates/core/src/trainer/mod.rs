//! Staged training: batch assembly, Adam with a warmup + cosine schedule,
//! per-stage early stopping on validation Recall@10, weight transfer
//! between stages and the convergence log.

mod checkpoint;
mod log;
mod run;

pub use checkpoint::Checkpoint;
pub use log::{EpochRecord, StageRecord, TrainLog};
pub use run::{
    initial_checkpoint, run_all_stages, run_stage, run_stage_with, run_stages, validation_metrics,
    Validation,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before a stage stops.
    pub patience: usize,
    pub lr: f64,
    /// Share of a stage's step budget spent on the linear warmup.
    pub warmup_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub tau: f64,
    /// Maximum context size for the track-playlist loss.
    pub j: usize,
    /// Self-attention fusion for the track-playlist loss; a normalized mean
    /// over context rows otherwise.
    pub fusion: bool,
    pub fusion_init_std: f64,
    /// Seed tracks per validation playlist.
    pub val_seeds: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 50,
            max_epochs: 45,
            patience: 5,
            lr: 1e-4,
            warmup_fraction: 0.05,
            beta1: 0.9,
            beta2: 0.99,
            tau: 0.07,
            j: 10,
            fusion: true,
            fusion_init_std: 0.02,
            val_seeds: 10,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("j", self.j),
            ("val_seeds", self.val_seeds),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.patience > self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config("lr and tau must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config(format!(
                "warmup_fraction {} outside [0, 1)",
                self.warmup_fraction
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} {b} outside [0, 1)")));
            }
        }
        if !(self.fusion_init_std >= 0.0) {
            return Err(Error::Config("fusion_init_std must be non-negative".into()));
        }
        Ok(())
    }
}

/// Learning rate at `step` of a stage with `total` steps: a linear ramp
/// from 0 to `lr` over `warmup` steps, then `lr · ½(1 + cos(π · progress))`
/// over the remaining steps.
pub fn lr_at(step: usize, warmup: usize, total: usize, lr: f64) -> f64 {
    if step < warmup {
        return lr * step as f64 / warmup as f64;
    }
    let span = total.saturating_sub(warmup);
    if span == 0 {
        return lr;
    }
    let progress = ((step - warmup) as f64 / span as f64).min(1.0);
    (lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        assert_eq!(lr_at(0, 10, 110, 1e-3), 0.0);
        assert_eq!(lr_at(10, 10, 110, 1e-3), 1e-3);
        assert!((lr_at(60, 10, 110, 1e-3) - 5e-4).abs() < 1e-12);
        assert!(lr_at(110, 10, 110, 1e-3).abs() < 1e-18);
        assert_eq!(lr_at(500, 10, 110, 1e-3), 0.0);
        assert_eq!(lr_at(5, 0, 10, 1.0), lr_at(5, 0, 10, 1.0).max(0.0));
    }

    #[test]
    fn schedule_is_monotone_in_each_phase() {
        let lrs: Vec<f64> = (0..=200).map(|s| lr_at(s, 20, 200, 0.01)).collect();
        assert!(lrs[..=20].windows(2).all(|w| w[1] >= w[0]));
        assert!(lrs[20..].windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            patience: 50,
            ..TrainConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = TrainConfig {
            j: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
