use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::model::{Architecture, ModelDims};
use crate::{Error, Result};

/// How the classification and distillation losses are weighted.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MtlScheme {
    Fixed { a: f64, b: f64 },
    /// Softmax of two standard normal draws, redrawn every optimizer step.
    RandomPerStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistillParts {
    AttentionOnly,
    FeatureOnly,
    Both,
}

impl DistillParts {
    pub fn attention(&self) -> bool {
        matches!(self, DistillParts::AttentionOnly | DistillParts::Both)
    }

    pub fn features(&self) -> bool {
        matches!(self, DistillParts::FeatureOnly | DistillParts::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DistillLevel {
    /// MSE between frame feature matrices.
    FrameLevel,
    /// MSE between pooled utterance vectors.
    Global,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TeacherSource {
    PretrainedFrozen { checkpoint: PathBuf },
    /// A fresh teacher trained on its own cross-entropy alongside the student.
    JointFromScratch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub arch: Architecture,
    pub epochs: usize,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    /// Learning rate for `encoder.*` parameters; `lr_head` when unset.
    pub lr_encoder: Option<f64>,
    pub lr_head: f64,
    pub mtl_scheme: MtlScheme,
    pub distill_parts: DistillParts,
    pub distill_level: DistillLevel,
    /// Required for the student.
    pub teacher: Option<TeacherSource>,
    pub model: ModelDims,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: Architecture::BaselinePlain,
            epochs: 20,
            early_stop_patience: 10,
            batch_size: 16,
            lr_encoder: None,
            lr_head: 1e-3,
            mtl_scheme: MtlScheme::RandomPerStep,
            distill_parts: DistillParts::Both,
            distill_level: DistillLevel::FrameLevel,
            teacher: None,
            model: ModelDims::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive (got {v})")))
            }
        };
        positive("lr_head", self.lr_head)?;
        if let Some(lr) = self.lr_encoder {
            positive("lr_encoder", lr)?;
        }
        if let MtlScheme::Fixed { a, b } = self.mtl_scheme {
            if !(a >= 0.0 && b >= 0.0 && a.is_finite() && b.is_finite()) {
                return Err(Error::Config(format!("Fixed MTL weights must be finite and >= 0 (got {a}, {b})")));
            }
        }
        if self.arch == Architecture::Student && self.teacher.is_none() {
            return Err(Error::Config("the student needs a `teacher` source".into()));
        }
        Ok(())
    }

    /// Learning rate for a named parameter.
    pub fn lr_for(&self, name: &str) -> f64 {
        if name.starts_with("encoder.") {
            self.lr_encoder.unwrap_or(self.lr_head)
        } else {
            self.lr_head
        }
    }
}
