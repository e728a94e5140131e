use std::fs;

use prosody_slu::data::oracle::pitch_slope;
use prosody_slu::data::{
    batch_iter, batch_order, build_synth_dataset, crop_or_pad, encode_wav, extract_features, item_rng, load_features,
    load_wav, parse_wav, synth_utterance, synth_utterance_detailed, write_wav, Batch, Dataset, Example,
    FeatureConfig, Manifest, Split, SynthSpec,
};
use prosody_slu::dsp::{band_energies, mel_spectrogram, FrameSpec, Matrix, Waveform};
use prosody_slu::model::Features;
use prosody_slu::Error;
use proptest::prelude::*;

fn wav_header(sample_rate: u32, channels: u16, bits: u16, data_len: u32) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(36 + data_len).to_le_bytes());
    b.extend_from_slice(b"WAVE");
    b.extend_from_slice(b"fmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&channels.to_le_bytes());
    b.extend_from_slice(&sample_rate.to_le_bytes());
    b.extend_from_slice(&(sample_rate * channels as u32 * bits as u32 / 8).to_le_bytes());
    b.extend_from_slice(&(channels * bits / 8).to_le_bytes());
    b.extend_from_slice(&bits.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&data_len.to_le_bytes());
    b
}

fn tiny_spec() -> SynthSpec {
    SynthSpec {
        utterance_seconds: 1.0,
        train_per_intent: 2,
        validation_per_intent: 1,
        test_per_intent: 1,
        ..SynthSpec::default()
    }
}

#[test]
fn wav_length_and_scaling() {
    let mut b = wav_header(16000, 1, 16, 8);
    for s in [i16::MIN, -1, 0, i16::MAX] {
        b.extend_from_slice(&s.to_le_bytes());
    }
    let w = parse_wav(&b).unwrap();
    assert_eq!(w.len(), 4);
    assert_eq!(w.samples()[0], -1.0);
    assert_eq!(w.samples()[2], 0.0);
    assert_eq!(w.samples()[3], 32767.0 / 32768.0);
}

#[test]
fn wav_format_errors_name_the_property() {
    let mut b = wav_header(44100, 1, 16, 2);
    b.extend_from_slice(&[0, 0]);
    let err = parse_wav(&b).unwrap_err();
    assert!(matches!(err, Error::WavFormat(_)));
    assert!(err.to_string().contains("sample_rate 44100 != 16000"), "{err}");

    let mut b = wav_header(16000, 2, 16, 4);
    b.extend_from_slice(&[0; 4]);
    assert!(parse_wav(&b).unwrap_err().to_string().contains("channels 2 != 1"));

    let mut b = wav_header(16000, 1, 8, 2);
    b.extend_from_slice(&[0; 2]);
    assert!(parse_wav(&b).unwrap_err().to_string().contains("bits_per_sample 8 != 16"));
}

#[test]
fn malformed_riff_reports_offsets() {
    match parse_wav(b"RIFX\0\0\0\0WAVE") {
        Err(Error::WavParse { offset, .. }) => assert_eq!(offset, 0),
        other => panic!("{other:?}"),
    }
    match parse_wav(b"RIFF\0\0\0\0WAVX") {
        Err(Error::WavParse { offset, .. }) => assert_eq!(offset, 8),
        other => panic!("{other:?}"),
    }
    // data chunk claims more bytes than the file has
    let mut b = wav_header(16000, 1, 16, 100);
    b.extend_from_slice(&[0; 10]);
    match parse_wav(&b) {
        Err(Error::WavParse { offset, reason }) => {
            assert_eq!(offset, 40);
            assert!(reason.contains("past end"), "{reason}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn crop_or_pad_examples() {
    let six = Waveform::from_samples((0..96000).map(|i| (i % 100) as f32 / 100.0).collect()).unwrap();
    let c = crop_or_pad(&six, 5.0).unwrap();
    assert_eq!(c.samples(), &six.samples()[..80000]);

    let three = Waveform::from_samples(vec![0.5; 48000]).unwrap();
    let p = crop_or_pad(&three, 5.0).unwrap();
    assert_eq!(p.len(), 80000);
    assert!(p.samples()[48000..].iter().all(|&s| s == 0.0));
    assert_eq!(p.samples()[..48000], three.samples()[..]);

    let five = Waveform::from_samples((0..80000).map(|i| (i as f32).sin()).collect()).unwrap();
    let same = crop_or_pad(&five, 5.0).unwrap();
    let bits = |w: &Waveform| w.samples().iter().map(|s| s.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&same), bits(&five));
    assert!(crop_or_pad(&five, 0.0).is_err());
}

#[test]
fn synth_is_seeded() {
    let spec = SynthSpec::default();
    let a = synth_utterance(2, 1, &spec, &mut item_rng(5, Split::Train, 5, 0)).unwrap();
    let b = synth_utterance(2, 1, &spec, &mut item_rng(5, Split::Train, 5, 0)).unwrap();
    let c = synth_utterance(2, 1, &spec, &mut item_rng(6, Split::Train, 5, 0)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
    assert_eq!(a.1, 5);
    assert_eq!(a.0.len(), 32000);
    assert!(synth_utterance(4, 0, &spec, &mut item_rng(0, Split::Train, 0, 0)).is_err());
}

#[test]
fn contour_shows_in_tracked_pitch_slope() {
    let spec = SynthSpec::default();
    let cfg = FeatureConfig::default();
    for content in 0..spec.n_content_classes {
        for i in 0..3 {
            let mut rng = item_rng(11, Split::Test, content, i);
            let (rise, _) = synth_utterance(content, 0, &spec, &mut rng).unwrap();
            let (fall, _) = synth_utterance(content, 1, &spec, &mut rng).unwrap();
            assert!(pitch_slope(&rise, &cfg).unwrap() > 0.0, "content {content}");
            assert!(pitch_slope(&fall, &cfg).unwrap() < 0.0, "content {content}");
        }
    }
}

/// Mean upper-minus-lower band energy in each third of the voiced span.
fn band_tilt_profile(w: &Waveform, start: usize, end: usize) -> [f64; 3] {
    let spec = FrameSpec::default();
    let mel = mel_spectrogram(w, &spec).unwrap();
    let e = band_energies(&mel).unwrap();
    let third = (end - start) / 3;
    let mut out = [0.0; 3];
    for (k, slot) in out.iter_mut().enumerate() {
        let (lo, hi) = (start + k * third, start + (k + 1) * third);
        let frames: Vec<usize> = (0..mel.frames())
            .filter(|&t| t * 160 >= lo && t * 160 + 400 <= hi)
            .collect();
        *slot = frames.iter().map(|&t| e.upper[t] - e.lower[t]).sum::<f64>() / frames.len() as f64;
    }
    out
}

#[test]
fn content_classes_differ_in_band_energy() {
    let spec = SynthSpec::default();
    let profiles: Vec<[f64; 3]> = (0..spec.n_content_classes)
        .map(|content| {
            let mut rng = item_rng(3, Split::Train, content, 0);
            let (w, _, span) = synth_utterance_detailed(content, 0, &spec, &mut rng).unwrap();
            band_tilt_profile(&w, span.start, span.end)
        })
        .collect();
    for i in 0..profiles.len() {
        for j in 0..i {
            let gap = (0..3).map(|k| (profiles[i][k] - profiles[j][k]).abs()).fold(0.0, f64::max);
            assert!(gap > 0.3, "classes {i} {j}: {profiles:?}");
        }
    }
}

#[test]
fn synth_dataset_layout_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec();
    let m = build_synth_dataset(&spec, dir.path()).unwrap();
    assert_eq!(m.split(Split::Train).len(), 16);
    assert_eq!(m.split(Split::Validation).len(), 8);
    assert_eq!(m.split(Split::Test).len(), 8);
    for split in Split::ALL {
        let mut counts = vec![0; 8];
        for e in m.split(split) {
            counts[e.intent] += 1;
        }
        assert!(counts.iter().all(|&c| c == spec.per_intent(split)), "{split}: {counts:?}");
    }
    let first = fs::read(dir.path().join("manifest.jsonl")).unwrap();
    let line = String::from_utf8(first.clone()).unwrap();
    let row: serde_json::Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
    assert!(row.get("audio").unwrap().is_string());
    assert!(row.get("intent").unwrap().is_u64());
    assert!(row.get("split").unwrap().is_string());

    let loaded = Manifest::load(&dir.path().join("manifest.jsonl")).unwrap();
    assert_eq!(loaded.entries, m.entries);

    let again = tempfile::tempdir().unwrap();
    build_synth_dataset(&spec, again.path()).unwrap();
    assert_eq!(fs::read(again.path().join("manifest.jsonl")).unwrap(), first);
    let e = &m.entries[0];
    assert_eq!(
        fs::read(dir.path().join(&e.audio)).unwrap(),
        fs::read(again.path().join(&e.audio)).unwrap()
    );
}

#[test]
fn synth_wav_round_trip_within_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec::default();
    let (w, _) = synth_utterance(1, 0, &spec, &mut item_rng(0, Split::Train, 2, 0)).unwrap();
    let path = dir.path().join("x.wav");
    write_wav(&path, &w).unwrap();
    let back = load_wav(&path).unwrap();
    assert_eq!(back.len(), w.len());
    for (a, b) in w.samples().iter().zip(back.samples()) {
        assert!((a - b).abs() <= 1.0 / 32768.0, "{a} {b}");
    }
}

#[test]
fn manifest_errors_carry_line_numbers() {
    let text = "{\"audio\":\"a.wav\",\"intent\":0,\"split\":\"train\"}\n{\"audio\":\"b.wav\",\"intent\":1,\"split\":\"dev\"}\n";
    match Manifest::parse(text, ".".into()) {
        Err(Error::Manifest { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    fs::write(&path, "{\"audio\":\"missing.wav\",\"intent\":0,\"split\":\"test\"}\n").unwrap();
    let err = Manifest::load(&path).unwrap_err().to_string();
    assert!(err.contains("missing.wav"), "{err}");
}

#[test]
fn batch_order_examples() {
    let order = batch_order(400, 64, 9, 0).unwrap();
    assert_eq!(order.len(), 7);
    assert_eq!(order[6].len(), 16);
    assert!(order[..6].iter().all(|b| b.len() == 64));
    let mut all: Vec<usize> = order.concat();
    all.sort_unstable();
    assert_eq!(all, (0..400).collect::<Vec<_>>());
    assert_eq!(order, batch_order(400, 64, 9, 0).unwrap());
    assert_ne!(order, batch_order(400, 64, 9, 1).unwrap());
    assert!(matches!(batch_order(0, 4, 0, 0), Err(Error::EmptySplit(_))));
}

fn example(frames: usize, label: usize) -> Example {
    let fill = |cols: usize| Matrix::from_vec(frames, cols, vec![1.0 + label as f64; frames * cols]).unwrap();
    Example {
        audio: format!("{label}.wav").into(),
        label,
        features: Features {
            mel: fill(80),
            prosody: fill(6),
        },
    }
}

#[test]
fn batches_pad_and_mask() {
    let examples: Vec<Example> = [5, 9, 7, 3, 9].iter().enumerate().map(|(i, &t)| example(t, i)).collect();
    let mut seen = 0;
    for b in batch_iter(&examples, 2, 1, 0).unwrap() {
        let b: Batch = b.unwrap();
        let t = b.mel[0].rows();
        for i in 0..b.len() {
            let len = b.lengths[i];
            assert_eq!(b.mel[i].rows(), t);
            assert_eq!(b.prosody[i].rows(), t);
            assert_eq!(b.frame_mask[i].len(), t);
            assert!(b.frame_mask[i][..len].iter().all(|&m| m));
            assert!(b.frame_mask[i][len..].iter().all(|&m| !m));
            assert_eq!(len, examples[b.indices[i]].features.frames());
            assert!(b.mel[i].row(t - 1).iter().all(|&v| v == 0.0) || len == t);
            assert_eq!(b.utterance(i), examples[b.indices[i]].features);
            assert_eq!(b.labels[i], examples[b.indices[i]].label);
        }
        seen += b.len();
    }
    assert_eq!(seen, 5);
}

#[test]
fn feature_cache_hits_and_recovers() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec();
    let (w, _) = synth_utterance(0, 1, &spec, &mut item_rng(0, Split::Train, 1, 0)).unwrap();
    let wav = dir.path().join("u.wav");
    write_wav(&wav, &w).unwrap();
    let cache = dir.path().join("cache");
    let cfg = FeatureConfig {
        crop_seconds: Some(1.0),
        ..FeatureConfig::default()
    };
    let fresh = load_features(&wav, &cfg, None).unwrap();
    let first = load_features(&wav, &cfg, Some(&cache)).unwrap();
    assert_eq!(first, fresh);
    let entries: Vec<_> = fs::read_dir(&cache).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(entries.len(), 1);
    assert_eq!(load_features(&wav, &cfg, Some(&cache)).unwrap(), fresh);

    // corrupt entry: recomputed and rewritten
    fs::write(&entries[0], b"garbage").unwrap();
    assert_eq!(load_features(&wav, &cfg, Some(&cache)).unwrap(), fresh);
    assert_ne!(fs::read(&entries[0]).unwrap(), b"garbage");

    // a different front-end setting gets its own entry
    let other = FeatureConfig {
        crop_seconds: Some(0.9),
        ..cfg
    };
    load_features(&wav, &other, Some(&cache)).unwrap();
    assert_eq!(fs::read_dir(&cache).unwrap().count(), 2);
}

#[test]
fn dataset_load_splits_and_aligns() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny_spec();
    let m = build_synth_dataset(&spec, dir.path()).unwrap();
    let cfg = FeatureConfig {
        crop_seconds: Some(1.0),
        ..FeatureConfig::default()
    };
    let ds = Dataset::load(&m, &cfg, None).unwrap();
    assert_eq!(ds.n_intents, 8);
    assert_eq!((ds.train.len(), ds.validation.len(), ds.test.len()), (16, 8, 8));
    for ex in ds.train.iter().chain(&ds.test) {
        assert_eq!(ex.features.mel.rows(), 98);
        assert_eq!(ex.features.prosody.rows(), 98);
        assert_eq!(ex.features.mel.cols(), 80);
        assert_eq!(ex.features.prosody.cols(), 6);
    }
    let w = load_wav(&ds.test[0].audio).unwrap();
    let direct = extract_features(&w, &cfg).unwrap();
    assert_eq!(direct.mel.rows(), ds.test[0].features.mel.rows());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn wav_encode_parse_round_trip(samples in prop::collection::vec(-1.0f32..1.0, 0..2000)) {
        let w = Waveform::from_samples(samples).unwrap();
        let back = parse_wav(&encode_wav(&w)).unwrap();
        prop_assert_eq!(back.len(), w.len());
        for (a, b) in w.samples().iter().zip(back.samples()) {
            prop_assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn crop_or_pad_has_exact_length(n in 0usize..40000, secs in 0.01f64..2.5) {
        let w = Waveform::from_samples(vec![0.25; n]).unwrap();
        let c = crop_or_pad(&w, secs).unwrap();
        prop_assert_eq!(c.len(), (secs * 16000.0).round() as usize);
        let keep = n.min(c.len());
        prop_assert!(c.samples()[..keep].iter().all(|&s| s == 0.25));
        prop_assert!(c.samples()[keep..].iter().all(|&s| s == 0.0));
    }
}
