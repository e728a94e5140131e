//! Minimal RIFF/WAVE reader and writer for 16-bit mono PCM at 16 kHz.

use std::fs;
use std::path::Path;

use crate::dsp::{Waveform, SAMPLE_RATE};
use crate::{Error, Result};

const PCM: u16 = 1;

fn parse_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::WavParse {
        offset,
        reason: reason.into(),
    }
}

fn u16_at(b: &[u8], at: usize) -> Result<u16> {
    b.get(at..at + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or_else(|| parse_err(at, "unexpected end of file"))
}

fn u32_at(b: &[u8], at: usize) -> Result<u32> {
    b.get(at..at + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or_else(|| parse_err(at, "unexpected end of file"))
}

pub fn load_wav(path: &Path) -> Result<Waveform> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_wav(&bytes)
}

pub fn parse_wav(b: &[u8]) -> Result<Waveform> {
    if b.get(0..4) != Some(b"RIFF") {
        return Err(parse_err(0, "missing RIFF tag"));
    }
    if b.get(8..12) != Some(b"WAVE") {
        return Err(parse_err(8, "missing WAVE tag"));
    }
    let mut pos = 12;
    let mut format_seen = false;
    while pos < b.len() {
        let id = b.get(pos..pos + 4).ok_or_else(|| parse_err(pos, "truncated chunk header"))?;
        let size = u32_at(b, pos + 4)? as usize;
        let body = pos + 8;
        let end = body
            .checked_add(size)
            .filter(|&e| e <= b.len())
            .ok_or_else(|| parse_err(pos + 4, format!("chunk size {size} runs past end of file")))?;
        match id {
            b"fmt " => {
                if size < 16 {
                    return Err(parse_err(pos + 4, format!("fmt chunk of {size} bytes")));
                }
                let audio_format = u16_at(b, body)?;
                let channels = u16_at(b, body + 2)?;
                let sample_rate = u32_at(b, body + 4)?;
                let bits = u16_at(b, body + 14)?;
                if audio_format != PCM {
                    return Err(Error::WavFormat(format!("audio_format {audio_format} != 1 (PCM)")));
                }
                if channels != 1 {
                    return Err(Error::WavFormat(format!("channels {channels} != 1")));
                }
                if sample_rate != SAMPLE_RATE {
                    return Err(Error::WavFormat(format!("sample_rate {sample_rate} != {SAMPLE_RATE}")));
                }
                if bits != 16 {
                    return Err(Error::WavFormat(format!("bits_per_sample {bits} != 16")));
                }
                format_seen = true;
            }
            b"data" => {
                if !format_seen {
                    return Err(parse_err(pos, "data chunk before fmt chunk"));
                }
                if size % 2 != 0 {
                    return Err(parse_err(pos + 4, format!("odd data size {size} for 16-bit samples")));
                }
                let samples = b[body..end]
                    .chunks_exact(2)
                    .map(|s| i16::from_le_bytes([s[0], s[1]]) as f32 / 32768.0)
                    .collect();
                return Waveform::from_samples(samples);
            }
            _ => {}
        }
        // chunks are word aligned
        pos = end + (size & 1);
    }
    Err(parse_err(b.len(), "no data chunk"))
}

/// Quantizes `x` in [-1, 1] to 16-bit PCM, saturating.
pub fn quantize(x: f32) -> i16 {
    (x as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn encode_wav(w: &Waveform) -> Vec<u8> {
    let data_len = (w.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate().to_le_bytes());
    out.extend_from_slice(&(w.sample_rate() * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in w.samples() {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    out
}

pub fn write_wav(path: &Path, w: &Waveform) -> Result<()> {
    fs::write(path, encode_wav(w)).map_err(|e| Error::io(path, e))
}

/// Truncates or zero-pads the tail to exactly `seconds`.
pub fn crop_or_pad(w: &Waveform, seconds: f64) -> Result<Waveform> {
    if !(seconds > 0.0) {
        return Err(Error::Config(format!("crop length must be positive (got {seconds})")));
    }
    let n = (seconds * w.sample_rate() as f64).round() as usize;
    let mut samples = w.samples().to_vec();
    samples.resize(n, 0.0);
    Waveform::new(samples, w.sample_rate())
}
