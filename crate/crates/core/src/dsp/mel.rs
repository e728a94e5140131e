use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{FrameSpec, Matrix, Waveform, LOG_FLOOR, SAMPLE_RATE};
use crate::{Error, Result};

const MEL_F_SP: f64 = 200.0 / 3.0;
const MEL_MIN_LOG_HZ: f64 = 1000.0;
const MEL_MIN_LOG_MEL: f64 = MEL_MIN_LOG_HZ / MEL_F_SP;

fn mel_log_step() -> f64 {
    6.4f64.ln() / 27.0
}

/// Slaney mel scale: linear below 1 kHz, logarithmic above.
pub fn hz_to_mel(hz: f64) -> f64 {
    if hz < MEL_MIN_LOG_HZ {
        hz / MEL_F_SP
    } else {
        MEL_MIN_LOG_MEL + (hz / MEL_MIN_LOG_HZ).ln() / mel_log_step()
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel < MEL_MIN_LOG_MEL {
        mel * MEL_F_SP
    } else {
        MEL_MIN_LOG_HZ * ((mel - MEL_MIN_LOG_MEL) * mel_log_step()).exp()
    }
}

/// Triangular filters with unit peak, `n_mels` rows over `n_fft / 2 + 1`
/// DFT bins, spanning 0 Hz to Nyquist. Returns the weights and the filter
/// center frequencies.
pub fn mel_filterbank(n_mels: usize, n_fft: usize) -> (Matrix, Vec<f64>) {
    let n_bins = n_fft / 2 + 1;
    let nyquist = SAMPLE_RATE as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut weights = Matrix::zeros(n_mels, n_bins);
    for m in 0..n_mels {
        let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * SAMPLE_RATE as f64 / n_fft as f64;
            let w = ((f - lo) / (center - lo)).min((hi - f) / (hi - center));
            if w > 0.0 {
                weights.set(m, k, w);
            }
        }
    }
    (weights, edges[1..=n_mels].to_vec())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Matrix,
    pub frame_spec: FrameSpec,
}

impl MelSpectrogram {
    pub fn frames(&self) -> usize {
        self.values.rows()
    }
}

/// Log-mel spectrogram: periodic Hann window, DFT of `window_samples`
/// points, power spectrum through the mel filterbank, natural log with a
/// `1e-10` floor. Frames start at sample 0 with no centering.
pub fn mel_spectrogram(w: &Waveform, spec: &FrameSpec) -> Result<MelSpectrogram> {
    spec.validate()?;
    let frames = spec.frame_count(w.len())?;
    let n = spec.window_samples;
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect();
    let (bank, _) = mel_filterbank(spec.n_mels, n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let n_bins = n / 2 + 1;
    let samples = w.samples();

    let mut values = Matrix::zeros(frames, spec.n_mels);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut power = vec![0.0f64; n_bins];
    for t in 0..frames {
        let start = t * spec.hop_samples;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(samples[start + i] as f64 * window[i], 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (p, c) in power.iter_mut().zip(&buf[..n_bins]) {
            *p = c.norm_sqr();
        }
        let row = values.row_mut(t);
        for (m, out) in row.iter_mut().enumerate() {
            let energy: f64 = bank.row(m).iter().zip(&power).map(|(w, p)| w * p).sum();
            *out = energy.max(LOG_FLOOR).ln();
        }
    }
    Ok(MelSpectrogram {
        values,
        frame_spec: *spec,
    })
}

/// Per-frame log energies `(total, upper half, lower half)` of the mel bands.
#[derive(Debug, Clone, PartialEq)]
pub struct BandEnergies {
    pub total: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

pub fn band_energies(m: &MelSpectrogram) -> Result<BandEnergies> {
    let n_mels = m.values.cols();
    if n_mels == 0 || n_mels % 2 != 0 {
        return Err(Error::Config(format!(
            "band split needs an even mel count (got {n_mels})"
        )));
    }
    let half = n_mels / 2;
    let frames = m.values.rows();
    let mut out = BandEnergies {
        total: Vec::with_capacity(frames),
        upper: Vec::with_capacity(frames),
        lower: Vec::with_capacity(frames),
    };
    for t in 0..frames {
        let row = m.values.row(t);
        let lin = |v: &f64| v.exp().max(LOG_FLOOR);
        let lower: f64 = row[..half].iter().map(lin).sum();
        let upper: f64 = row[half..].iter().map(lin).sum();
        out.total.push((lower + upper).ln());
        out.upper.push(upper.ln());
        out.lower.push(lower.ln());
    }
    Ok(out)
}
