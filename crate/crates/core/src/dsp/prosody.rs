use super::{band_energies, mel_spectrogram, nccf, track_pitch, FrameSpec, Matrix, MelSpectrogram, PitchConfig, Waveform};
use crate::Result;

/// Column order: log pitch, NCCF, log-pitch delta, total energy, upper-band
/// energy, lower-band energy.
pub const PROSODY_CHANNELS: [&str; 6] = ["log_pitch", "nccf", "pitch_delta", "energy_total", "energy_upper", "energy_lower"];

/// T x 6 prosodic feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProsodyTrack {
    pub values: Matrix,
}

impl ProsodyTrack {
    pub fn frames(&self) -> usize {
        self.values.rows()
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.values.column(c)
    }
}

/// Un-normalized prosodic features, computed against an existing mel
/// spectrogram of the same waveform so both tracks share framing.
pub fn raw_prosody_track(
    w: &Waveform,
    mel: &MelSpectrogram,
    spec: &FrameSpec,
    cfg: &PitchConfig,
) -> Result<ProsodyTrack> {
    let corr = nccf(w, spec, cfg)?;
    let pitch = track_pitch(&corr, cfg, w.sample_rate());
    let energy = band_energies(mel)?;
    let frames = mel.frames();
    debug_assert_eq!(frames, pitch.f0.len());

    let log_pitch: Vec<f64> = pitch.f0.iter().map(|f| f.ln()).collect();
    let mut values = Matrix::zeros(frames, 6);
    for t in 0..frames {
        let prev = log_pitch[t.saturating_sub(1)];
        let next = log_pitch[(t + 1).min(frames - 1)];
        let row = values.row_mut(t);
        row[0] = log_pitch[t];
        row[1] = pitch.nccf[t];
        row[2] = (next - prev) / 2.0;
        row[3] = energy.total[t];
        row[4] = energy.upper[t];
        row[5] = energy.lower[t];
    }
    Ok(ProsodyTrack { values })
}

/// Per-channel z-normalization in place. Channels whose standard deviation
/// is below `1e-8` become all-zero.
pub fn z_normalize(m: &mut Matrix) {
    let rows = m.rows();
    if rows == 0 {
        return;
    }
    for c in 0..m.cols() {
        let mean = (0..rows).map(|r| m.get(r, c)).sum::<f64>() / rows as f64;
        let var = (0..rows).map(|r| (m.get(r, c) - mean).powi(2)).sum::<f64>() / rows as f64;
        let std = var.sqrt();
        for r in 0..rows {
            let v = if std < 1e-8 {
                0.0
            } else {
                (m.get(r, c) - mean) / std
            };
            m.set(r, c, v);
        }
    }
}

/// The normalized six-channel prosodic track for a waveform.
pub fn prosody_track(w: &Waveform, spec: &FrameSpec, cfg: &PitchConfig) -> Result<ProsodyTrack> {
    let mel = mel_spectrogram(w, spec)?;
    let mut track = raw_prosody_track(w, &mel, spec, cfg)?;
    z_normalize(&mut track.values);
    Ok(track)
}
