//! Signal-processing front end: framing, log-mel spectrogram, NCCF pitch
//! tracking and the six-channel prosodic feature track.

mod dump;
mod mel;
mod pitch;
mod prosody;

pub use dump::{read_feature_dump, write_feature_dump, FeatureKind};
pub use mel::{band_energies, mel_filterbank, mel_spectrogram, mel_to_hz, hz_to_mel, BandEnergies, MelSpectrogram};
pub use pitch::{lag_range, local_cost, nccf, track_pitch, PitchTrack};
pub use prosody::{prosody_track, raw_prosody_track, z_normalize, ProsodyTrack, PROSODY_CHANNELS};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SAMPLE_RATE: u32 = 16_000;
pub const LOG_FLOOR: f64 = 1e-10;

/// Mono PCM audio at 16 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(Error::InvalidWaveform(format!(
                "sample_rate {sample_rate} != {SAMPLE_RATE}"
            )));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidWaveform(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn from_samples(samples: Vec<f32>) -> Result<Self> {
        Self::new(samples, SAMPLE_RATE)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrameSpec {
    pub window_samples: usize,
    pub hop_samples: usize,
    pub n_mels: usize,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            window_samples: 400,
            hop_samples: 160,
            n_mels: 80,
        }
    }
}

impl FrameSpec {
    pub fn validate(&self) -> Result<()> {
        if self.hop_samples == 0 || self.window_samples <= self.hop_samples {
            return Err(Error::Config(format!(
                "frame spec needs window_samples > hop_samples > 0 (got {} / {})",
                self.window_samples, self.hop_samples
            )));
        }
        if self.n_mels == 0 || self.n_mels % 2 != 0 {
            return Err(Error::Config(format!(
                "n_mels must be even and positive (got {})",
                self.n_mels
            )));
        }
        Ok(())
    }

    /// `1 + floor((n - window) / hop)`; errors when `n < window`.
    pub fn frame_count(&self, num_samples: usize) -> Result<usize> {
        if num_samples < self.window_samples {
            return Err(Error::UtteranceTooShort {
                samples: num_samples,
                window: self.window_samples,
            });
        }
        Ok(1 + (num_samples - self.window_samples) / self.hop_samples)
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop_samples as f64 / SAMPLE_RATE as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PitchConfig {
    pub f0_min: f64,
    pub f0_max: f64,
    /// Transition cost per squared octave of lag change between frames.
    pub dp_penalty: f64,
    pub nccf_floor_eps: f64,
    /// Kaldi-style long-lag discount: the local cost is
    /// `-nccf * (1 - soft_min_f0 * lag / sample_rate)`. Keeps the tracker off
    /// sub-harmonic lags, where a pure tone correlates just as well.
    pub soft_min_f0: f64,
}

impl Default for PitchConfig {
    fn default() -> Self {
        Self {
            f0_min: 60.0,
            f0_max: 400.0,
            dp_penalty: 0.5,
            nccf_floor_eps: 1e-8,
            soft_min_f0: 10.0,
        }
    }
}

impl PitchConfig {
    pub fn validate(&self) -> Result<()> {
        let nyquist = SAMPLE_RATE as f64 / 2.0;
        if !(0.0 < self.f0_min && self.f0_min < self.f0_max && self.f0_max < nyquist) {
            return Err(Error::Config(format!(
                "pitch range must satisfy 0 < f0_min < f0_max < {nyquist} (got {} / {})",
                self.f0_min, self.f0_max
            )));
        }
        if self.dp_penalty < 0.0 || self.nccf_floor_eps <= 0.0 || self.soft_min_f0 < 0.0 {
            return Err(Error::Config("pitch penalties must be non-negative".into()));
        }
        Ok(())
    }
}

/// Dense row-major matrix of frame features.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "matrix",
                lhs: vec![rows, cols],
                rhs: vec![data.len()],
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// First `rows` rows.
    pub fn truncate_rows(&self, rows: usize) -> Matrix {
        let rows = rows.min(self.rows);
        Matrix {
            rows,
            cols: self.cols,
            data: self.data[..rows * self.cols].to_vec(),
        }
    }
}
