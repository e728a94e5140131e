use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{crop_or_pad, parse_wav, Manifest, Split};
use crate::dsp::{
    mel_spectrogram, raw_prosody_track, read_feature_dump, write_feature_dump, z_normalize, FeatureKind, FrameSpec,
    PitchConfig, Waveform,
};
use crate::model::Features;
use crate::{par, Error, Result};

/// Front-end settings that determine feature values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub frame: FrameSpec,
    pub pitch: PitchConfig,
    /// Crop or pad every utterance to this length before extraction.
    pub crop_seconds: Option<f64>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            frame: FrameSpec::default(),
            pitch: PitchConfig::default(),
            crop_seconds: Some(2.0),
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        self.pitch.validate()?;
        if let Some(s) = self.crop_seconds {
            if !(s > 0.0) {
                return Err(Error::Config(format!("crop_seconds must be positive (got {s})")));
            }
        }
        Ok(())
    }

    /// Hex sha256 over the audio bytes and every setting that affects the
    /// extracted values.
    pub fn cache_key(&self, audio_bytes: &[u8]) -> Result<String> {
        let mut h = Sha256::new();
        h.update(audio_bytes);
        h.update(serde_json::to_vec(self)?);
        Ok(hex::encode(h.finalize()))
    }
}

/// Log-mel and normalized prosody for one waveform.
pub fn extract_features(w: &Waveform, cfg: &FeatureConfig) -> Result<Features> {
    let cropped;
    let w = match cfg.crop_seconds {
        Some(s) => {
            cropped = crop_or_pad(w, s)?;
            &cropped
        }
        None => w,
    };
    let mel = mel_spectrogram(w, &cfg.frame)?;
    let mut prosody = raw_prosody_track(w, &mel, &cfg.frame, &cfg.pitch)?.values;
    z_normalize(&mut prosody);
    Ok(Features { mel: mel.values, prosody })
}

fn read_cached(path: &Path, key: &str) -> Result<Features> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    std::io::BufRead::read_line(&mut r, &mut line).map_err(|e| Error::io(path, e))?;
    if line.trim_end() != key {
        return Err(Error::FeatureDump(format!("cache key mismatch in {}", path.display())));
    }
    let mut rest = Vec::new();
    std::io::Read::read_to_end(&mut r, &mut rest).map_err(|e| Error::io(path, e))?;
    // two dumps back to back; the first one's length follows from its header
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::FeatureDump("missing mel header".into()))?;
    #[derive(Deserialize)]
    struct Dims {
        rows: usize,
        cols: usize,
    }
    let dims: Dims = serde_json::from_slice(&rest[..nl]).map_err(|e| Error::FeatureDump(e.to_string()))?;
    let split = (nl + 1 + dims.rows * dims.cols * 4).min(rest.len());
    let (mel, k1) = read_feature_dump(&mut &rest[..split])?;
    let (prosody, k2) = read_feature_dump(&mut &rest[split..])?;
    if k1 != FeatureKind::Mel || k2 != FeatureKind::Prosody || mel.rows() != prosody.rows() {
        return Err(Error::FeatureDump(format!("inconsistent cache entry {}", path.display())));
    }
    Ok(Features { mel, prosody })
}

fn write_cached(path: &Path, key: &str, f: &Features) -> Result<()> {
    let mut buf = format!("{key}\n").into_bytes();
    write_feature_dump(&mut buf, &f.mel, FeatureKind::Mel)?;
    write_feature_dump(&mut buf, &f.prosody, FeatureKind::Prosody)?;
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, buf).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Rounds features through f32 so cached and freshly computed values are
/// identical.
fn as_stored(mut f: Features) -> Features {
    for v in f.mel.data_mut().iter_mut().chain(f.prosody.data_mut()) {
        *v = *v as f32 as f64;
    }
    f
}

/// Features for the audio file at `path`, served from `cache_dir` when a
/// valid entry exists. A corrupt or mismatched entry is recomputed with a
/// warning.
pub fn load_features(path: &Path, cfg: &FeatureConfig, cache_dir: Option<&Path>) -> Result<Features> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let compute = || -> Result<Features> {
        let w = parse_wav(&bytes).map_err(|e| match e {
            Error::WavFormat(m) => Error::WavFormat(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok(as_stored(extract_features(&w, cfg)?))
    };
    let Some(dir) = cache_dir else {
        return compute();
    };
    let key = cfg.cache_key(&bytes)?;
    let entry = dir.join(format!("{key}.feat"));
    if entry.exists() {
        match read_cached(&entry, &key) {
            Ok(f) => return Ok(f),
            Err(e) => log::warn!("recomputing features for {}: {e}", path.display()),
        }
    }
    let f = compute()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_cached(&entry, &key, &f)?;
    Ok(f)
}

#[derive(Debug, Clone)]
pub struct Example {
    pub audio: PathBuf,
    pub label: usize,
    pub features: Features,
}

/// Feature-extracted manifest, split by partition.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub n_intents: usize,
    pub train: Vec<Example>,
    pub validation: Vec<Example>,
    pub test: Vec<Example>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[Example] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// Extracts features for every manifest entry, fanning out per file.
    pub fn load(manifest: &Manifest, cfg: &FeatureConfig, cache_dir: Option<&Path>) -> Result<Self> {
        cfg.validate()?;
        let examples = par::map(&manifest.entries, |e| -> Result<(Split, Example)> {
            let audio = manifest.resolve(e);
            let features = load_features(&audio, cfg, cache_dir)?;
            Ok((
                e.split,
                Example {
                    audio,
                    label: e.intent,
                    features,
                },
            ))
        });
        let mut ds = Dataset {
            n_intents: manifest.n_intents(),
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
        };
        for r in examples {
            let (split, ex) = r?;
            match split {
                Split::Train => ds.train.push(ex),
                Split::Validation => ds.validation.push(ex),
                Split::Test => ds.test.push(ex),
            }
        }
        Ok(ds)
    }
}
