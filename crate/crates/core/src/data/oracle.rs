//! Model-free checks that the synthetic corpus carries the intended cues:
//! contour in the tracked pitch slope, content in the average spectrum.

use super::{crop_or_pad, FeatureConfig};
use crate::dsp::{mel_spectrogram, nccf, track_pitch, Waveform};
use crate::Result;

/// Frames whose NCCF reaches this value count as voiced for the slope fit.
pub const VOICED_NCCF: f64 = 0.5;

/// Least-squares slope of log f0 per frame over the voiced frames inside
/// the middle 80% of the utterance. Zero when fewer than two frames qualify.
pub fn pitch_slope(w: &Waveform, cfg: &FeatureConfig) -> Result<f64> {
    let w = match cfg.crop_seconds {
        Some(s) => crop_or_pad(w, s)?,
        None => w.clone(),
    };
    let corr = nccf(&w, &cfg.frame, &cfg.pitch)?;
    let track = track_pitch(&corr, &cfg.pitch, w.sample_rate());
    let t = track.f0.len();
    let (lo, hi) = (t / 10, t - t / 10);
    let pts: Vec<(f64, f64)> = (lo..hi)
        .filter(|&i| track.nccf[i] >= VOICED_NCCF)
        .map(|i| (i as f64, track.f0[i].ln()))
        .collect();
    if pts.len() < 2 {
        return Ok(0.0);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(if sxx > 0.0 { sxy / sxx } else { 0.0 })
}

/// Time-averaged log-mel vector.
pub fn mean_mel(w: &Waveform, cfg: &FeatureConfig) -> Result<Vec<f64>> {
    let w = match cfg.crop_seconds {
        Some(s) => crop_or_pad(w, s)?,
        None => w.clone(),
    };
    let mel = mel_spectrogram(&w, &cfg.frame)?;
    let m = &mel.values;
    let mut out = vec![0.0; m.cols()];
    for r in 0..m.rows() {
        for (o, v) in out.iter_mut().zip(m.row(r)) {
            *o += v;
        }
    }
    for o in &mut out {
        *o /= m.rows() as f64;
    }
    Ok(out)
}

/// Nearest-centroid classifier: fits class means on `train` and returns the
/// accuracy on `test`. Labels must lie in `0..n_classes`.
pub fn nearest_centroid_accuracy(train: &[(Vec<f64>, usize)], test: &[(Vec<f64>, usize)], n_classes: usize) -> f64 {
    let dim = train.first().map_or(0, |x| x.0.len());
    let mut sums = vec![vec![0.0; dim]; n_classes];
    let mut counts = vec![0usize; n_classes];
    for (x, y) in train {
        counts[*y] += 1;
        for (s, v) in sums[*y].iter_mut().zip(x) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= c.max(1) as f64;
        }
    }
    let correct = test
        .iter()
        .filter(|(x, y)| {
            let mut best = (f64::INFINITY, 0);
            for (k, c) in sums.iter().enumerate() {
                if counts[k] == 0 {
                    continue;
                }
                let d: f64 = c.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum();
                if d < best.0 {
                    best = (d, k);
                }
            }
            best.1 == *y
        })
        .count();
    correct as f64 / test.len().max(1) as f64
}
