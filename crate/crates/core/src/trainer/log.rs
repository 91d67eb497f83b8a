use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::losses::Stage;

/// One training epoch. Loss components are means over the epoch's steps;
/// components a stage does not use are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: Stage,
    /// 1-based within the stage.
    pub epoch: usize,
    pub loss: f64,
    pub wtc: f64,
    pub ttc: Option<f64>,
    pub tpc: Option<f64>,
    /// Track-playlist samples dropped because all context rows were cold.
    pub tpc_skipped: usize,
    pub val_recall10: f64,
    pub val_ndcg10: f64,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    pub wall_ms: u64,
}

/// Stage boundary marker.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub start_hash: String,
    pub end_hash: String,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub stages: Vec<StageRecord>,
}

impl TrainLog {
    pub fn extend(&mut self, other: TrainLog) {
        self.epochs.extend(other.epochs);
        self.stages.extend(other.stages);
    }

    pub fn stage_epochs(&self, stage: Stage) -> impl Iterator<Item = &EpochRecord> {
        self.epochs.iter().filter(move |e| e.stage == stage)
    }

    /// Copy with every wall-clock field zeroed, for byte-stable output.
    pub fn without_timing(&self) -> TrainLog {
        let mut out = self.clone();
        for e in &mut out.epochs {
            e.wall_ms = 0;
        }
        out
    }

    /// Tab-separated epoch rows. Each stage is closed by a `#` comment line
    /// carrying its boundary record.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("stage\tepoch\tloss\twtc\tttc\ttpc\ttpc_skipped\tval_recall10\tval_ndcg10\tlr\twall_ms\n");
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
        let mut bounds = self.stages.iter().peekable();
        for (i, e) in self.epochs.iter().enumerate() {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                e.stage,
                e.epoch,
                e.loss,
                e.wtc,
                opt(e.ttc),
                opt(e.tpc),
                e.tpc_skipped,
                e.val_recall10,
                e.val_ndcg10,
                e.lr,
                e.wall_ms
            );
            let closes = self
                .epochs
                .get(i + 1)
                .is_none_or(|n| n.stage != e.stage || n.epoch <= e.epoch);
            if closes {
                if let Some(b) = bounds.next_if(|b| b.stage == e.stage) {
                    let _ = writeln!(
                        s,
                        "# stage {} end: epochs {} best {} early_stop {} start {} end {}",
                        b.stage,
                        b.epochs_run,
                        b.best_epoch,
                        b.stopped_early,
                        b.start_hash,
                        b.end_hash
                    );
                }
            }
        }
        s
    }
}
