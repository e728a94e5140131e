//! Kaldi-flavoured pitch tracking: per-frame normalized cross-correlation
//! over a lag range, then a Viterbi path over lags with a log-lag transition
//! penalty.

use super::{FrameSpec, Matrix, PitchConfig, Waveform};
use crate::Result;

/// Inclusive lag range `[floor(sr / f0_max), ceil(sr / f0_min)]`.
pub fn lag_range(cfg: &PitchConfig, sample_rate: u32) -> (usize, usize) {
    let sr = sample_rate as f64;
    ((sr / cfg.f0_max).floor() as usize, (sr / cfg.f0_min).ceil() as usize)
}

/// NCCF for every frame and lag. Column `j` holds lag `lag_min + j`. The
/// signal is zero-padded at the end by the maximum lag so every frame has a
/// full comparison window.
pub fn nccf(w: &Waveform, spec: &FrameSpec, cfg: &PitchConfig) -> Result<Matrix> {
    spec.validate()?;
    cfg.validate()?;
    let frames = spec.frame_count(w.len())?;
    let (lag_min, lag_max) = lag_range(cfg, w.sample_rate());
    let n = spec.window_samples;
    let mut x: Vec<f64> = w.samples().iter().map(|&s| s as f64).collect();
    x.resize(w.len() + lag_max, 0.0);

    let lags = lag_max - lag_min + 1;
    let mut out = Matrix::zeros(frames, lags);
    for t in 0..frames {
        let s = t * spec.hop_samples;
        let a = &x[s..s + n];
        let ea: f64 = a.iter().map(|v| v * v).sum();
        let row = out.row_mut(t);
        for (j, cell) in row.iter_mut().enumerate() {
            let l = lag_min + j;
            let b = &x[s + l..s + l + n];
            let (mut dot, mut eb) = (0.0, 0.0);
            for (p, q) in a.iter().zip(b) {
                dot += p * q;
                eb += q * q;
            }
            let denom = ((ea + cfg.nccf_floor_eps) * (eb + cfg.nccf_floor_eps)).sqrt();
            *cell = (dot / denom).clamp(-1.0, 1.0);
        }
    }
    Ok(out)
}

/// Per-frame cost of choosing a lag: `-nccf * (1 - soft_min_f0 * lag / sr)`.
pub fn local_cost(nccf_value: f64, lag: usize, cfg: &PitchConfig, sample_rate: u32) -> f64 {
    -nccf_value * (1.0 - cfg.soft_min_f0 * lag as f64 / sample_rate as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitchTrack {
    pub lags: Vec<usize>,
    pub f0: Vec<f64>,
    /// Raw NCCF at the chosen lag; doubles as a voicing confidence.
    pub nccf: Vec<f64>,
}

/// Viterbi path minimizing `sum_t local_cost(t, l_t) + dp_penalty * log2(l_t / l_{t-1})^2`.
/// Every frame gets a pitch, voiced or not.
pub fn track_pitch(nccf: &Matrix, cfg: &PitchConfig, sample_rate: u32) -> PitchTrack {
    let (lag_min, _) = lag_range(cfg, sample_rate);
    let frames = nccf.rows();
    let lags = nccf.cols();
    if frames == 0 || lags == 0 {
        return PitchTrack {
            lags: vec![],
            f0: vec![],
            nccf: vec![],
        };
    }
    let log_lag: Vec<f64> = (0..lags).map(|j| ((lag_min + j) as f64).log2()).collect();
    let local = |t: usize, j: usize| local_cost(nccf.get(t, j), lag_min + j, cfg, sample_rate);

    let mut cost: Vec<f64> = (0..lags).map(|j| local(0, j)).collect();
    let mut next = vec![0.0; lags];
    let mut back = vec![0u16; frames * lags];
    for t in 1..frames {
        for j in 0..lags {
            let mut best = f64::INFINITY;
            let mut arg = 0usize;
            for i in 0..lags {
                let d = log_lag[j] - log_lag[i];
                let c = cost[i] + cfg.dp_penalty * d * d;
                if c < best {
                    best = c;
                    arg = i;
                }
            }
            next[j] = best + local(t, j);
            back[t * lags + j] = arg as u16;
        }
        std::mem::swap(&mut cost, &mut next);
    }

    let mut j = (0..lags)
        .min_by(|&a, &b| cost[a].total_cmp(&cost[b]))
        .unwrap_or(0);
    let mut path = vec![0usize; frames];
    for t in (0..frames).rev() {
        path[t] = j;
        if t > 0 {
            j = back[t * lags + j] as usize;
        }
    }
    let sr = sample_rate as f64;
    PitchTrack {
        lags: path.iter().map(|&j| lag_min + j).collect(),
        f0: path.iter().map(|&j| sr / (lag_min + j) as f64).collect(),
        nccf: path.iter().enumerate().map(|(t, &j)| nccf.get(t, j)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::SAMPLE_RATE;

    fn tone(freq: f64, seconds: f64) -> Waveform {
        let n = (seconds * SAMPLE_RATE as f64) as usize;
        let pi2 = 2.0 * std::f64::consts::PI;
        Waveform::from_samples(
            (0..n)
                .map(|i| (0.5 * (pi2 * freq * i as f64 / SAMPLE_RATE as f64).sin()) as f32)
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn default_lag_range() {
        assert_eq!(lag_range(&PitchConfig::default(), SAMPLE_RATE), (40, 267));
    }

    #[test]
    fn periodic_signal_correlates_at_its_period() {
        let period = 100;
        let s: Vec<f32> = (0..8000)
            .map(|i| {
                let p = (i % period) as f32 / period as f32;
                (p - 0.5) * 0.8 + (p * 7.0).sin() * 0.1
            })
            .collect();
        let w = Waveform::from_samples(s).unwrap();
        let m = nccf(&w, &FrameSpec::default(), &PitchConfig::default()).unwrap();
        // frames whose shifted window stays inside the signal
        for t in 0..40 {
            assert!(m.get(t, 100 - 40) >= 0.999, "frame {t}: {}", m.get(t, 60));
        }
    }

    #[test]
    fn silent_frames_are_zero() {
        let w = Waveform::from_samples(vec![0.0; 3200]).unwrap();
        let m = nccf(&w, &FrameSpec::default(), &PitchConfig::default()).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.0));
        let track = track_pitch(&m, &PitchConfig::default(), SAMPLE_RATE);
        assert_eq!(track.f0.len(), m.rows());
        assert!(track.f0.iter().all(|f| f.is_finite()));
        assert!(track.nccf.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tone_220_correlates_at_its_period_lag() {
        let cfg = PitchConfig::default();
        let w = tone(220.0, 1.0);
        let m = nccf(&w, &FrameSpec::default(), &cfg).unwrap();
        for t in 0..m.rows() - 30 {
            let row = m.row(t);
            let raw_max = row.iter().cloned().fold(f64::MIN, f64::max);
            // The period lag is within 1e-3 of the global maximum; the raw
            // maximum itself may sit on a sub-harmonic multiple (145, 218).
            assert!(row[72 - 40].max(row[73 - 40]) > raw_max - 1e-3);
            let best = (0..row.len())
                .min_by(|&a, &b| {
                    local_cost(row[a], 40 + a, &cfg, SAMPLE_RATE)
                        .total_cmp(&local_cost(row[b], 40 + b, &cfg, SAMPLE_RATE))
                })
                .unwrap()
                + 40;
            assert!(best == 72 || best == 73, "frame {t}: lag {best}");
        }
    }
}
