//! Synthetic corpus in which intent = (content, contour). Content classes
//! differ only in their formant sequence; contour classes differ only in the
//! pitch trajectory, so identical "words" with a rising or falling glide map
//! to different intents.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{write_wav, Manifest, ManifestEntry, Split};
use crate::dsp::{Waveform, SAMPLE_RATE};
use crate::rng::stream;
use crate::{par, Error, Result};

/// (F1, F2, F3) in Hz.
const VOWELS: [[f64; 3]; 8] = [
    [730.0, 1090.0, 2440.0], // a
    [270.0, 2290.0, 3010.0], // i
    [300.0, 870.0, 2240.0],  // u
    [530.0, 1840.0, 2480.0], // e
    [570.0, 840.0, 2410.0],  // o
    [660.0, 1720.0, 2410.0], // ae
    [490.0, 1350.0, 1690.0], // er
    [520.0, 1190.0, 2390.0], // uh
];

/// Vowel index per segment for each content class.
const CONTENT_PATTERNS: [[usize; 3]; 8] = [
    [0, 1, 0],
    [2, 3, 2],
    [1, 4, 1],
    [5, 2, 6],
    [4, 5, 4],
    [6, 1, 7],
    [3, 0, 3],
    [7, 6, 1],
];

const FORMANT_BANDWIDTH: [f64; 3] = [90.0, 120.0, 180.0];
const FORMANT_GAIN: [f64; 3] = [1.0, 0.7, 0.35];
const MAX_HARMONIC_HZ: f64 = 4000.0;
const BASE_LEVEL: f64 = 0.02;
const ENVELOPE_BLOCK: usize = 32;

/// Glide endpoints in Hz.
pub const LOW_F0: f64 = 140.0;
pub const HIGH_F0: f64 = 220.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Contour {
    Rising,
    Falling,
}

impl Contour {
    pub fn from_class(c: usize) -> Self {
        if c == 0 {
            Contour::Rising
        } else {
            Contour::Falling
        }
    }

    pub fn endpoints(&self) -> (f64, f64) {
        match self {
            Contour::Rising => (LOW_F0, HIGH_F0),
            Contour::Falling => (HIGH_F0, LOW_F0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_content_classes: usize,
    pub n_contour_classes: usize,
    pub utterance_seconds: f64,
    pub train_per_intent: usize,
    pub validation_per_intent: usize,
    pub test_per_intent: usize,
    pub noise_snr_db: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_content_classes: 4,
            n_contour_classes: 2,
            utterance_seconds: 2.0,
            train_per_intent: 50,
            validation_per_intent: 10,
            test_per_intent: 10,
            noise_snr_db: 20.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(1..=CONTENT_PATTERNS.len()).contains(&self.n_content_classes) {
            return Err(Error::Config(format!(
                "n_content_classes must be in 1..={} (got {})",
                CONTENT_PATTERNS.len(),
                self.n_content_classes
            )));
        }
        if !(1..=2).contains(&self.n_contour_classes) {
            return Err(Error::Config(format!(
                "n_contour_classes must be 1 or 2 (got {})",
                self.n_contour_classes
            )));
        }
        if !(self.utterance_seconds >= 1.0) {
            return Err(Error::Config(format!(
                "utterance_seconds must be at least 1.0 (got {})",
                self.utterance_seconds
            )));
        }
        if self.train_per_intent == 0 || self.validation_per_intent == 0 || self.test_per_intent == 0 {
            return Err(Error::Config("per-intent split counts must be at least 1".into()));
        }
        if !self.noise_snr_db.is_finite() {
            return Err(Error::Config("noise_snr_db must be finite".into()));
        }
        Ok(())
    }

    pub fn n_intents(&self) -> usize {
        self.n_content_classes * self.n_contour_classes
    }

    pub fn per_intent(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train_per_intent,
            Split::Validation => self.validation_per_intent,
            Split::Test => self.test_per_intent,
        }
    }

    pub fn intent(&self, content: usize, contour: usize) -> usize {
        content * self.n_contour_classes + contour
    }

    /// Inverse of [`SynthSpec::intent`]: `(content, contour)`.
    pub fn classes(&self, intent: usize) -> (usize, usize) {
        (intent / self.n_contour_classes, intent % self.n_contour_classes)
    }
}

/// Where the voiced part of an utterance sits, in samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoicedSpan {
    pub start: usize,
    pub end: usize,
}

fn formant_envelope(vowel: usize, hz: f64) -> f64 {
    let mut e = 0.0;
    for i in 0..3 {
        let d = (hz - VOWELS[vowel][i]) / FORMANT_BANDWIDTH[i];
        e += FORMANT_GAIN[i] * (-0.5 * d * d).exp();
    }
    e
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

/// One utterance plus its intent id and voiced span.
pub fn synth_utterance_detailed(
    content: usize,
    contour: usize,
    spec: &SynthSpec,
    rng: &mut impl Rng,
) -> Result<(Waveform, usize, VoicedSpan)> {
    spec.validate()?;
    if content >= spec.n_content_classes || contour >= spec.n_contour_classes {
        return Err(Error::Config(format!(
            "class ({content}, {contour}) outside {}x{}",
            spec.n_content_classes, spec.n_contour_classes
        )));
    }
    let sr = SAMPLE_RATE as f64;
    let n = (spec.utterance_seconds * sr).round() as usize;
    let lead = (rng.random_range(0.20..0.35) * sr) as usize;
    let trail = (rng.random_range(0.20..0.35) * sr) as usize;
    let span = VoicedSpan {
        start: lead,
        end: n - trail,
    };
    let voiced = (span.end - span.start) as f64;

    // segment boundaries as fractions of the voiced span
    let w: [f64; 3] = [rng.random_range(0.8..1.2), rng.random_range(0.8..1.2), rng.random_range(0.8..1.2)];
    let total: f64 = w.iter().sum();
    let b1 = w[0] / total;
    let b2 = (w[0] + w[1]) / total;
    let fade = 0.04 * sr / voiced;

    let pattern = CONTENT_PATTERNS[content];
    let (f_start, f_end) = Contour::from_class(contour).endpoints();
    let gain = rng.random_range(0.3..0.4);
    let ramp = 0.03 * sr;

    let mut samples = vec![0.0f64; n];
    let mut phase = rng.random_range(0.0..2.0 * PI);
    // harmonic amplitudes, refreshed every ENVELOPE_BLOCK samples
    let mut amps: Vec<f64> = Vec::new();
    for (i, s) in samples.iter_mut().enumerate().take(span.end).skip(span.start) {
        let x = (i - span.start) as f64 / voiced;
        let f0 = f_start + (f_end - f_start) * x;
        phase += 2.0 * PI * f0 / sr;
        if (i - span.start) % ENVELOPE_BLOCK == 0 {
            // crossfade weights of the three segments
            let s12 = smoothstep((x - b1) / fade + 0.5);
            let s23 = smoothstep((x - b2) / fade + 0.5);
            let seg = [1.0 - s12, s12 - s23, s23];
            amps.clear();
            let mut k = 1;
            while k as f64 * f0 < MAX_HARMONIC_HZ {
                let hz = k as f64 * f0;
                let env: f64 = (0..3).map(|j| seg[j] * formant_envelope(pattern[j], hz)).sum();
                amps.push((BASE_LEVEL + env) / k as f64);
                k += 1;
            }
        }
        let mut v = 0.0;
        for (k, a) in amps.iter().enumerate() {
            if (k + 1) as f64 * f0 >= MAX_HARMONIC_HZ {
                break;
            }
            v += a * ((k + 1) as f64 * phase).sin();
        }
        let from_start = (i - span.start) as f64;
        let to_end = (span.end - i) as f64;
        let amp = smoothstep(from_start / ramp) * smoothstep(to_end / ramp);
        *s = v * amp;
    }

    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    for s in &mut samples {
        *s *= gain / peak;
    }
    let power = samples[span.start..span.end].iter().map(|v| v * v).sum::<f64>() / voiced;
    let noise_std = (power / 10f64.powf(spec.noise_snr_db / 10.0)).sqrt();
    let noise = Normal::new(0.0, noise_std).map_err(|e| Error::Config(e.to_string()))?;
    let out: Vec<f32> = samples
        .iter()
        .map(|&v| (v + noise.sample(rng)).clamp(-1.0, 1.0) as f32)
        .collect();
    Ok((Waveform::from_samples(out)?, spec.intent(content, contour), span))
}

pub fn synth_utterance(
    content: usize,
    contour: usize,
    spec: &SynthSpec,
    rng: &mut impl Rng,
) -> Result<(Waveform, usize)> {
    synth_utterance_detailed(content, contour, spec, rng).map(|(w, i, _)| (w, i))
}

/// Random stream for one corpus item, independent of generation order.
pub fn item_rng(seed: u64, split: Split, intent: usize, index: usize) -> impl Rng {
    stream(seed, &format!("synth/{split}/{intent}/{index}"))
}

/// Writes WAV files under `out_dir/audio/<split>/` and a shuffled
/// `out_dir/manifest.jsonl`. Returns the manifest.
pub fn build_synth_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for split in Split::ALL {
        let dir = out_dir.join("audio").join(split.as_str());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for intent in 0..spec.n_intents() {
            for index in 0..spec.per_intent(split) {
                jobs.push((split, intent, index));
            }
        }
    }
    let entries = par::map(&jobs, |&(split, intent, index)| -> Result<ManifestEntry> {
        let (content, contour) = spec.classes(intent);
        let mut rng = item_rng(spec.seed, split, intent, index);
        let (w, _) = synth_utterance(content, contour, spec, &mut rng)?;
        let rel = Path::new("audio")
            .join(split.as_str())
            .join(format!("{intent:02}_{index:04}.wav"));
        write_wav(&out_dir.join(&rel), &w)?;
        Ok(ManifestEntry {
            audio: rel,
            intent,
            split,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut entries = entries;
    entries.shuffle(&mut stream(spec.seed, "synth/manifest"));
    let manifest = Manifest {
        root: out_dir.to_path_buf(),
        entries,
    };
    manifest.save(&out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}
