use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Example;
use crate::model::Model;
use crate::{par, Error, Result};

/// `K x K` counts; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub intent: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if counts.iter().any(|r| r.len() != k) {
            return Err(Error::Config("confusion matrix must be square".into()));
        }
        Ok(Self { counts })
    }

    /// From `(true, predicted)` pairs.
    pub fn from_pairs(pairs: &[(usize, usize)], k: usize) -> Result<Self> {
        let mut cm = Self::new(k);
        for &(t, p) in pairs {
            cm.add(t, p)?;
        }
        Ok(cm)
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let k = self.k();
        for label in [truth, predicted] {
            if label >= k {
                return Err(Error::LabelOutOfRange { label, classes: k });
            }
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.trace(), self.total())
    }

    /// Precision, recall and F1 per class; every 0/0 is taken as 0.
    pub fn per_class(&self) -> Vec<ClassMetrics> {
        (0..self.k())
            .map(|c| {
                let tp = self.counts[c][c];
                let predicted: u64 = (0..self.k()).map(|r| self.counts[r][c]).sum();
                let actual: u64 = self.counts[c].iter().sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, actual);
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassMetrics {
                    intent: c,
                    precision,
                    recall,
                    f1,
                }
            })
            .collect()
    }
}

/// Unweighted mean of per-class F1 over all `K` classes.
pub fn macro_f1(cm: &ConfusionMatrix) -> f64 {
    let per = cm.per_class();
    if per.is_empty() {
        return 0.0;
    }
    per.iter().map(|c| c.f1).sum::<f64>() / per.len() as f64
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub n: u64,
    pub checkpoint: String,
    pub config_hash: String,
    pub seed: u64,
}

impl EvalReport {
    pub fn from_confusion(cm: &ConfusionMatrix, checkpoint: String, config_hash: String, seed: u64) -> Self {
        Self {
            accuracy: cm.accuracy(),
            macro_f1: macro_f1(cm),
            per_class: cm.per_class(),
            n: cm.total(),
            checkpoint,
            config_hash,
            seed,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

/// Predicts every example (ties toward the lower class index) and returns
/// the confusion matrix with the raw `(true, predicted)` pairs.
pub fn evaluate_examples(model: &Model, examples: &[Example]) -> Result<(ConfusionMatrix, Vec<(usize, usize)>)> {
    if examples.is_empty() {
        return Err(Error::EmptySplit("evaluation".into()));
    }
    let k = model.config.n_intents;
    if let Some(ex) = examples.iter().find(|e| e.label >= k) {
        return Err(Error::IntentMismatch {
            left: k,
            right: ex.label + 1,
        });
    }
    let pairs = par::map(examples, |ex| model.predict(&ex.features).map(|p| (ex.label, p)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok((ConfusionMatrix::from_pairs(&pairs, k)?, pairs))
}

/// Accuracy restricted to a binary choice between each example's true class
/// and `partner(true class)`: correct when the true logit is strictly larger.
pub fn pairwise_accuracy(model: &Model, examples: &[Example], partner: impl Fn(usize) -> usize + Sync) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptySplit("pairwise evaluation".into()));
    }
    let hits = par::map(examples, |ex| -> Result<bool> {
        let (logits, _) = model.infer(&ex.features)?;
        let other = partner(ex.label);
        Ok(logits[ex.label] > logits[other])
    });
    let mut n = 0;
    for h in hits {
        n += h? as usize;
    }
    Ok(n as f64 / examples.len() as f64)
}
