use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use super::{evaluate_examples, EvalReport};
use crate::data::{load_features, load_wav, Example, FeatureConfig, Manifest, Split};
use crate::model::ModelCheckpoint;
use crate::{par, Error, Result};

fn canonical(v: &Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut keys: Vec<&String> = m.keys().collect();
            keys.sort();
            let mut out = Map::new();
            for k in keys {
                out.insert(k.clone(), canonical(&m[k]));
            }
            Value::Object(out)
        }
        Value::Array(xs) => Value::Array(xs.iter().map(canonical).collect()),
        other => other.clone(),
    }
}

/// Hex sha256 of a training configuration with its run-specific fields
/// removed: the seed, and the path of a pretrained teacher (which differs
/// per seed). Runs that differ only in those share a hash.
pub fn config_hash(config: &Value) -> String {
    let mut v = config.clone();
    if let Value::Object(m) = &mut v {
        m.remove("seed");
        if let Some(Value::Object(t)) = m.get_mut("teacher") {
            if let Some(inner) = t.get_mut("PretrainedFrozen") {
                *inner = Value::Null;
            }
        }
    }
    let bytes = serde_json::to_vec(&canonical(&v)).expect("json values serialize");
    hex::encode(Sha256::digest(bytes))
}

/// Evaluates a checkpoint on one manifest split.
pub fn evaluate(
    checkpoint: &Path,
    manifest: &Path,
    split: Split,
    features: &FeatureConfig,
    cache_dir: Option<&Path>,
) -> Result<EvalReport> {
    let ckpt = ModelCheckpoint::load(checkpoint)?;
    let manifest = Manifest::load(manifest)?;
    let k = ckpt.model.config.n_intents;
    if manifest.n_intents() != k {
        return Err(Error::IntentMismatch {
            left: k,
            right: manifest.n_intents(),
        });
    }
    let entries = manifest.split(split);
    if entries.is_empty() {
        return Err(Error::EmptySplit(split.to_string()));
    }
    let examples = par::map(&entries, |e| -> Result<Example> {
        let audio = manifest.resolve(e);
        Ok(Example {
            features: load_features(&audio, features, cache_dir)?,
            audio,
            label: e.intent,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (cm, _) = evaluate_examples(&ckpt.model, &examples)?;
    // prefer the training config stored next to the checkpoint
    let hash = match checkpoint.parent().map(|d| d.join("config.json")) {
        Some(p) if p.is_file() => {
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            config_hash(&serde_json::from_str(&text)?)
        }
        _ => config_hash(&serde_json::to_value(ckpt.model.config)?),
    };
    Ok(EvalReport::from_confusion(
        &cm,
        checkpoint.display().to_string(),
        hash,
        ckpt.meta.seed,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRow {
    pub frame_index: usize,
    pub time_seconds: f64,
    pub alpha: f64,
}

/// Attention weights of a checkpoint on one WAV file, one row per pooled
/// frame, written as CSV to `out`.
pub fn dump_attention(checkpoint: &Path, wav: &Path, out: &Path, features: &FeatureConfig) -> Result<Vec<AttentionRow>> {
    let ckpt = ModelCheckpoint::load(checkpoint)?;
    let model = &ckpt.model;
    if model.params.get("sap.w").is_err() {
        return Err(Error::NoAttention(model.config.arch.to_string()));
    }
    let w = load_wav(wav)?;
    let f = crate::data::extract_features(&w, features)?;
    let (_, alpha) = model.infer(&f)?;
    let step = features.frame.hop_seconds() * model.config.encoder.downsample_factor as f64;
    let rows: Vec<AttentionRow> = alpha
        .iter()
        .enumerate()
        .map(|(i, &a)| AttentionRow {
            frame_index: i,
            time_seconds: i as f64 * step,
            alpha: a,
        })
        .collect();
    let mut csv = String::from("frame_index,time_seconds,alpha\n");
    for r in &rows {
        writeln!(csv, "{},{},{}", r.frame_index, r.time_seconds, r.alpha).expect("string write");
    }
    fs::write(out, csv).map_err(|e| Error::io(out, e))?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub config_hash: String,
    /// Short description taken from the run's `config.json`.
    pub label: String,
    pub runs: Vec<String>,
    pub seeds: Vec<u64>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub macro_f1_mean: f64,
    pub macro_f1_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

/// Mean and sample standard deviation; a single value has deviation 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn describe(dir: &Path) -> String {
    let Ok(text) = fs::read_to_string(dir.join("config.json")) else {
        return String::from("?");
    };
    let Ok(v) = serde_json::from_str::<Value>(&text) else {
        return String::from("?");
    };
    let field = |k: &str| v.get(k).map(|x| compact(x)).unwrap_or_default();
    let mut parts = vec![field("arch")];
    if v.get("arch").and_then(Value::as_str) == Some("Student") {
        for k in ["distill_parts", "distill_level", "mtl_scheme"] {
            parts.push(field(k));
        }
        let teacher = match v.get("teacher") {
            Some(Value::Object(m)) => m.keys().next().cloned().unwrap_or_default(),
            Some(other) => compact(other),
            None => String::new(),
        };
        parts.push(teacher);
    }
    if let Some(m) = v.get("model") {
        if m.get("prosody_attention").and_then(Value::as_bool) == Some(true) {
            parts.push("prosody_attention".into());
        }
        if let Some(Value::Array(mask)) = m.get("feature_mask") {
            if mask.len() < 6 {
                parts.push(format!("mask={}", compact(&Value::Array(mask.clone()))));
            }
        }
    }
    parts.join(" ")
}

fn compact(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string().replace('"', ""),
    }
}

/// Groups runs by config hash and sorts groups by mean accuracy, highest first.
pub fn compare_runs(run_dirs: &[PathBuf]) -> Result<Comparison> {
    let mut groups: Vec<(String, String, Vec<(PathBuf, EvalReport)>)> = Vec::new();
    for dir in run_dirs {
        let path = dir.join("metrics.json");
        if !path.is_file() {
            return Err(Error::MissingMetrics(dir.clone()));
        }
        let report = EvalReport::load(&path)?;
        match groups.iter_mut().find(|g| g.0 == report.config_hash) {
            Some(g) => g.2.push((dir.clone(), report)),
            None => groups.push((report.config_hash.clone(), describe(dir), vec![(dir.clone(), report)])),
        }
    }
    let mut rows: Vec<ComparisonRow> = groups
        .into_iter()
        .map(|(hash, label, runs)| {
            let acc: Vec<f64> = runs.iter().map(|r| r.1.accuracy).collect();
            let f1: Vec<f64> = runs.iter().map(|r| r.1.macro_f1).collect();
            let (accuracy_mean, accuracy_std) = mean_std(&acc);
            let (macro_f1_mean, macro_f1_std) = mean_std(&f1);
            ComparisonRow {
                config_hash: hash,
                label,
                runs: runs.iter().map(|r| r.0.display().to_string()).collect(),
                seeds: runs.iter().map(|r| r.1.seed).collect(),
                accuracy_mean,
                accuracy_std,
                macro_f1_mean,
                macro_f1_std,
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        b.accuracy_mean
            .total_cmp(&a.accuracy_mean)
            .then_with(|| a.config_hash.cmp(&b.config_hash))
    });
    Ok(Comparison { rows })
}

impl Comparison {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<14} {:>4}  {:<17} {:<17} {}\n",
            "config", "runs", "accuracy", "macro_f1", "description"
        );
        for r in &self.rows {
            writeln!(
                s,
                "{:<14} {:>4}  {:.4} ± {:.4}   {:.4} ± {:.4}   {}",
                &r.config_hash[..12.min(r.config_hash.len())],
                r.runs.len(),
                r.accuracy_mean,
                r.accuracy_std,
                r.macro_f1_mean,
                r.macro_f1_std,
                r.label
            )
            .expect("string write");
        }
        s
    }
}
