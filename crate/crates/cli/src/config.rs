use std::fs;
use std::path::{Path, PathBuf};

use prosody_slu::data::{FeatureConfig, SynthSpec};
use prosody_slu::train::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Where `synth-data` writes and `train` looks for `manifest.jsonl`.
    pub data_dir: PathBuf,
    /// Overrides `<data_dir>/manifest.jsonl`.
    pub manifest: Option<PathBuf>,
    pub run_dir: PathBuf,
    /// Feature cache; disabled when unset.
    pub cache_dir: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data"),
            manifest: None,
            run_dir: PathBuf::from("runs/default"),
            cache_dir: None,
        }
    }
}

impl Paths {
    pub fn manifest(&self) -> PathBuf {
        self.manifest.clone().unwrap_or_else(|| self.data_dir.join("manifest.jsonl"))
    }
}

/// Everything a run needs, as one JSON document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub synth: SynthSpec,
    pub features: FeatureConfig,
    pub paths: Paths,
}

/// Failure while reading or validating configuration (exit status 2).
#[derive(Debug)]
pub struct ConfigError(pub String);

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |r: prosody_slu::Result<()>| r.map_err(|e| ConfigError(e.to_string()));
        check(self.train.validate())?;
        check(self.synth.validate())?;
        check(self.features.validate())
    }
}
