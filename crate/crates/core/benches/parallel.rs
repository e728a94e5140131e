//! Sequential (one worker) vs pooled execution of the two hot paths:
//! per-file feature extraction and one training epoch.

use criterion::{criterion_group, criterion_main, Criterion};
use prosody_slu::data::{extract_features, item_rng, synth_utterance, Dataset, Example, FeatureConfig, Split, SynthSpec};
use prosody_slu::dsp::Waveform;
use prosody_slu::model::{Architecture, ModelDims};
use prosody_slu::par;
use prosody_slu::train::{train, TeacherSource, TrainConfig};

fn spec() -> SynthSpec {
    SynthSpec {
        utterance_seconds: 1.0,
        ..SynthSpec::default()
    }
}

fn features() -> FeatureConfig {
    FeatureConfig {
        crop_seconds: Some(1.0),
        ..FeatureConfig::default()
    }
}

fn waves(split: Split, per_intent: usize) -> Vec<(Waveform, usize)> {
    let spec = spec();
    (0..spec.n_intents())
        .flat_map(|i| (0..per_intent).map(move |k| (i, k)))
        .map(|(intent, k)| {
            let (content, contour) = spec.classes(intent);
            synth_utterance(content, contour, &spec, &mut item_rng(0, split, intent, k)).unwrap()
        })
        .collect()
}

fn examples(split: Split, per_intent: usize) -> Vec<Example> {
    let cfg = features();
    par::map(&waves(split, per_intent), |(w, label)| Example {
        audio: format!("{split}/{label}.wav").into(),
        label: *label,
        features: extract_features(w, &cfg).unwrap(),
    })
}

fn worker_counts() -> Vec<(String, usize)> {
    let pool = par::default_workers();
    let mut v = vec![("sequential".to_string(), 1)];
    if par::PARALLEL {
        v.push((format!("pool-{pool}"), pool));
    }
    v
}

fn feature_extraction(c: &mut Criterion) {
    let batch = waves(Split::Train, 4);
    let cfg = features();
    let mut group = c.benchmark_group("extract_32x1s");
    group.sample_size(10);
    for (name, threads) in worker_counts() {
        group.bench_function(&name, |b| {
            b.iter(|| par::with_threads(threads, || par::map(&batch, |(w, _)| extract_features(w, &cfg).unwrap())))
        });
    }
    group.finish();
}

fn training_epoch(c: &mut Criterion) {
    let ds = Dataset {
        n_intents: spec().n_intents(),
        train: examples(Split::Train, 4),
        validation: examples(Split::Validation, 1),
        test: examples(Split::Test, 1),
    };
    let mut group = c.benchmark_group("student_epoch_32utt");
    group.sample_size(10);
    for (name, threads) in worker_counts() {
        let cfg = TrainConfig {
            arch: Architecture::Student,
            epochs: 1,
            batch_size: 16,
            model: ModelDims {
                hidden: 16,
                lstm_hidden: 8,
                ..ModelDims::default()
            },
            teacher: Some(TeacherSource::JointFromScratch),
            ..TrainConfig::default()
        };
        group.bench_function(&name, |b| {
            b.iter(|| par::with_threads(threads, || train(&ds, &cfg, None, None).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, feature_extraction, training_epoch);
criterion_main!(benches);
