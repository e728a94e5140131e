use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::LossBreakdown;
use crate::model::Architecture;
use crate::{Error, Result};

/// One line of `log.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean over the epoch's optimizer steps.
    pub train_loss: LossBreakdown,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    /// Joint-teacher runs only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_val_accuracy: Option<f64>,
    pub best_epoch: usize,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub arch: Architecture,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn new(arch: Architecture, seed: u64) -> Self {
        Self {
            arch,
            seed,
            epochs: Vec::new(),
        }
    }

    /// Epoch with the highest validation accuracy; ties go to the earliest.
    pub fn best_epoch(&self) -> Option<usize> {
        let mut best: Option<&EpochRecord> = None;
        for r in &self.epochs {
            if best.is_none_or(|b| r.val_accuracy > b.val_accuracy) {
                best = Some(r);
            }
        }
        best.map(|r| r.epoch)
    }

    pub fn best_val_accuracy(&self) -> Option<f64> {
        let e = self.best_epoch()?;
        self.epochs.iter().find(|r| r.epoch == e).map(|r| r.val_accuracy)
    }

    pub fn current_epoch(&self) -> Option<usize> {
        self.epochs.last().map(|r| r.epoch)
    }

    /// The log without wall-clock fields, for reproducibility comparisons.
    pub fn without_timing(&self) -> TrainLog {
        let mut l = self.clone();
        for r in &mut l.epochs {
            r.wall_seconds = 0.0;
        }
        l
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut s = String::new();
        for r in &self.epochs {
            s.push_str(&serde_json::to_string(r)?);
            s.push('\n');
        }
        Ok(s)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()?).map_err(|e| Error::io(path, e))
    }
}

/// True once `patience` epochs have passed without a new best.
pub fn early_stop(log: &TrainLog, patience: usize) -> bool {
    match (log.current_epoch(), log.best_epoch()) {
        (Some(cur), Some(best)) => cur - best >= patience,
        _ => false,
    }
}
