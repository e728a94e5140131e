use std::fs;
use std::path::{Path, PathBuf};

use prosody_slu::data::{build_synth_dataset, item_rng, synth_utterance, write_wav, Manifest, Split, SynthSpec};
use prosody_slu::data::FeatureConfig;
use prosody_slu::eval::{
    compare_runs, config_hash, dump_attention, evaluate, evaluate_examples, macro_f1, mean_std, ConfusionMatrix,
    EvalReport,
};
use prosody_slu::model::{build_model, Architecture, CheckpointMeta, ModelCheckpoint, ModelDims};
use prosody_slu::train::{MtlScheme, TeacherSource, TrainConfig};
use prosody_slu::Error;
use proptest::prelude::*;

#[test]
fn perfect_diagonal() {
    let cm = ConfusionMatrix::from_counts(vec![vec![3, 0, 0], vec![0, 5, 0], vec![0, 0, 2]]).unwrap();
    assert_eq!(cm.accuracy(), 1.0);
    assert_eq!(macro_f1(&cm), 1.0);
}

#[test]
fn constant_predictor_example() {
    // everything predicted as class 0: F1 = 2/3 for class 0, 0 for class 1
    let cm = ConfusionMatrix::from_counts(vec![vec![5, 0], vec![5, 0]]).unwrap();
    assert_eq!(cm.accuracy(), 0.5);
    assert!((macro_f1(&cm) - 1.0 / 3.0).abs() < 1e-15);
    let per = cm.per_class();
    assert_eq!(per[1].precision, 0.0);
    assert_eq!(per[1].recall, 0.0);
    assert_eq!(per[1].f1, 0.0);
}

#[test]
fn absent_class_counts_as_zero() {
    let cm = ConfusionMatrix::from_pairs(&[(0, 0), (1, 1)], 3).unwrap();
    assert!((macro_f1(&cm) - 2.0 / 3.0).abs() < 1e-15);
    assert!(matches!(
        ConfusionMatrix::from_pairs(&[(0, 3)], 3),
        Err(Error::LabelOutOfRange { label: 3, classes: 3 })
    ));
    assert!(ConfusionMatrix::from_counts(vec![vec![1, 2]]).is_err());
}

fn brute_force_f1(pairs: &[(usize, usize)], k: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..k {
        let tp = pairs.iter().filter(|&&(t, p)| t == c && p == c).count() as f64;
        let fp = pairs.iter().filter(|&&(t, p)| t != c && p == c).count() as f64;
        let fn_ = pairs.iter().filter(|&&(t, p)| t == c && p != c).count() as f64;
        if tp > 0.0 {
            total += 2.0 * tp / (2.0 * tp + fp + fn_);
        }
    }
    total / k as f64
}

proptest! {
    #[test]
    fn macro_f1_matches_brute_force(pairs in prop::collection::vec((0usize..5, 0usize..5), 1..200)) {
        let cm = ConfusionMatrix::from_pairs(&pairs, 5).unwrap();
        prop_assert_eq!(cm.total(), pairs.len() as u64);
        let hits = pairs.iter().filter(|(t, p)| t == p).count();
        prop_assert_eq!(cm.accuracy(), hits as f64 / pairs.len() as f64);
        prop_assert!((macro_f1(&cm) - brute_force_f1(&pairs, 5)).abs() < 1e-12);
        let f = macro_f1(&cm);
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn metrics_ignore_example_order(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..100), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut prosody_slu::rng::stream(seed, "perm"));
        let a = ConfusionMatrix::from_pairs(&pairs, 4).unwrap();
        let b = ConfusionMatrix::from_pairs(&shuffled, 4).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(macro_f1(&a), macro_f1(&b));
    }

    #[test]
    fn relabelling_classes_preserves_macro_f1(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..100)) {
        let perm = [2usize, 0, 3, 1];
        let moved: Vec<(usize, usize)> = pairs.iter().map(|&(t, p)| (perm[t], perm[p])).collect();
        let a = macro_f1(&ConfusionMatrix::from_pairs(&pairs, 4).unwrap());
        let b = macro_f1(&ConfusionMatrix::from_pairs(&moved, 4).unwrap());
        prop_assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn mean_std_uses_sample_deviation() {
    assert_eq!(mean_std(&[0.8]), (0.8, 0.0));
    let (m, s) = mean_std(&[0.7, 0.8, 0.9]);
    assert!((m - 0.8).abs() < 1e-12);
    assert!((s - 0.1).abs() < 1e-12);
}

#[test]
fn config_hash_ignores_seed_and_teacher_path() {
    let base = TrainConfig {
        arch: Architecture::Student,
        teacher: Some(TeacherSource::PretrainedFrozen {
            checkpoint: "runs/t0/best.ckpt".into(),
        }),
        ..TrainConfig::default()
    };
    let h = |c: &TrainConfig| config_hash(&serde_json::to_value(c).unwrap());
    let other = TrainConfig {
        seed: 9,
        teacher: Some(TeacherSource::PretrainedFrozen {
            checkpoint: "runs/t9/best.ckpt".into(),
        }),
        ..base.clone()
    };
    assert_eq!(h(&base), h(&other));
    assert_eq!(h(&base).len(), 64);
    let joint = TrainConfig {
        teacher: Some(TeacherSource::JointFromScratch),
        ..base.clone()
    };
    assert_ne!(h(&base), h(&joint));
    let fixed = TrainConfig {
        mtl_scheme: MtlScheme::Fixed { a: 0.5, b: 0.5 },
        ..base.clone()
    };
    assert_ne!(h(&base), h(&fixed));
}

fn report(acc: f64, f1: f64, hash: &str, seed: u64) -> EvalReport {
    EvalReport {
        accuracy: acc,
        macro_f1: f1,
        per_class: Vec::new(),
        n: 80,
        checkpoint: "best.ckpt".into(),
        config_hash: hash.into(),
        seed,
    }
}

fn run_dir(root: &Path, name: &str, r: &EvalReport, arch: &str) -> PathBuf {
    let dir = root.join(name);
    fs::create_dir_all(&dir).unwrap();
    r.save(&dir.join("metrics.json")).unwrap();
    fs::write(dir.join("config.json"), format!("{{\"arch\": \"{arch}\", \"seed\": {}}}", r.seed)).unwrap();
    dir
}

#[test]
fn compare_groups_and_sorts() {
    let root = tempfile::tempdir().unwrap();
    let dirs = vec![
        run_dir(root.path(), "plain0", &report(0.70, 0.6, "aaa", 0), "BaselinePlain"),
        run_dir(root.path(), "student0", &report(0.80, 0.7, "bbb", 0), "Student"),
        run_dir(root.path(), "student1", &report(0.90, 0.8, "bbb", 1), "Student"),
        run_dir(root.path(), "student2", &report(0.70, 0.6, "bbb", 2), "Student"),
    ];
    let table = compare_runs(&dirs).unwrap();
    assert_eq!(table.rows.len(), 2);
    let top = &table.rows[0];
    assert_eq!(top.config_hash, "bbb");
    assert_eq!(top.seeds, vec![0, 1, 2]);
    assert!((top.accuracy_mean - 0.8).abs() < 1e-12);
    assert!((top.accuracy_std - 0.1).abs() < 1e-12);
    assert!(top.label.starts_with("Student"));
    assert_eq!(table.rows[1].accuracy_std, 0.0);
    let text = table.to_text();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().contains("0.8000 ± 0.1000"));

    // ties in accuracy fall back to the hash
    let tie = vec![
        run_dir(root.path(), "z", &report(0.5, 0.5, "zzz", 0), "Teacher"),
        run_dir(root.path(), "y", &report(0.5, 0.5, "yyy", 0), "Teacher"),
    ];
    let t = compare_runs(&tie).unwrap();
    assert_eq!(t.rows[0].config_hash, "yyy");
}

#[test]
fn compare_requires_metrics() {
    let root = tempfile::tempdir().unwrap();
    let empty = root.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    assert!(matches!(compare_runs(&[empty]), Err(Error::MissingMetrics(_))));
}

fn tiny_corpus(dir: &Path) -> Manifest {
    let spec = SynthSpec {
        utterance_seconds: 1.0,
        train_per_intent: 1,
        validation_per_intent: 1,
        test_per_intent: 2,
        ..SynthSpec::default()
    };
    build_synth_dataset(&spec, dir).unwrap()
}

fn saved_model(dir: &Path, arch: Architecture, n_intents: usize) -> PathBuf {
    let dims = ModelDims {
        hidden: 8,
        lstm_hidden: 4,
        ..ModelDims::default()
    };
    let ckpt = ModelCheckpoint::new(
        build_model(arch, &dims, n_intents, 1).unwrap(),
        CheckpointMeta {
            epoch: 1,
            best_val_accuracy: 0.0,
            seed: 1,
        },
    );
    let path = dir.join(format!("{arch}{n_intents}.ckpt"));
    ckpt.save(&path).unwrap();
    path
}

fn features() -> FeatureConfig {
    FeatureConfig {
        crop_seconds: Some(1.0),
        ..FeatureConfig::default()
    }
}

#[test]
fn evaluate_recount_matches_confusion() {
    let dir = tempfile::tempdir().unwrap();
    let m = tiny_corpus(&dir.path().join("data"));
    let ckpt = saved_model(dir.path(), Architecture::BaselinePlain, 8);
    let r = evaluate(&ckpt, &dir.path().join("data/manifest.jsonl"), Split::Test, &features(), None).unwrap();
    assert_eq!(r.n, 16);
    assert_eq!(r.seed, 1);
    assert!((0.0..=1.0).contains(&r.accuracy));

    let loaded = ModelCheckpoint::load(&ckpt).unwrap();
    let ds = prosody_slu::data::Dataset::load(&m, &features(), None).unwrap();
    let (cm, pairs) = evaluate_examples(&loaded.model, &ds.test).unwrap();
    let hits = pairs.iter().filter(|(t, p)| t == p).count();
    assert_eq!(r.accuracy, hits as f64 / pairs.len() as f64);
    for t in 0..8 {
        for p in 0..8 {
            let n = pairs.iter().filter(|&&x| x == (t, p)).count() as u64;
            assert_eq!(cm.get(t, p), n);
        }
    }
    assert_eq!(r.macro_f1, macro_f1(&cm));
    assert!((r.macro_f1 - brute_force_f1(&pairs, 8)).abs() < 1e-12);

    assert!(matches!(evaluate_examples(&loaded.model, &[]), Err(Error::EmptySplit(_))));
}

#[test]
fn evaluate_rejects_intent_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    tiny_corpus(&dir.path().join("data"));
    let ckpt = saved_model(dir.path(), Architecture::Teacher, 4);
    let err = evaluate(&ckpt, &dir.path().join("data/manifest.jsonl"), Split::Test, &features(), None).unwrap_err();
    assert!(matches!(err, Error::IntentMismatch { left: 4, right: 8 }), "{err}");
}

#[test]
fn attention_dump_rows() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        utterance_seconds: 1.0,
        ..SynthSpec::default()
    };
    let (w, _) = synth_utterance(0, 0, &spec, &mut item_rng(0, Split::Test, 0, 0)).unwrap();
    let wav = dir.path().join("u.wav");
    write_wav(&wav, &w).unwrap();

    let student = saved_model(dir.path(), Architecture::Student, 8);
    let out = dir.path().join("alpha.csv");
    let rows = dump_attention(&student, &wav, &out, &features()).unwrap();
    // 98 mel frames, halved by the strided first layer
    assert_eq!(rows.len(), 49);
    assert!((rows.iter().map(|r| r.alpha).sum::<f64>() - 1.0).abs() < 1e-9);
    assert!((rows[3].time_seconds - 0.06).abs() < 1e-12);
    let csv = fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "frame_index,time_seconds,alpha");
    assert_eq!(csv.lines().count(), 50);

    let teacher = saved_model(dir.path(), Architecture::Teacher, 8);
    let rows = dump_attention(&teacher, &wav, &out, &features()).unwrap();
    assert_eq!(rows.len(), 98);
    assert!((rows[3].time_seconds - 0.03).abs() < 1e-12);
}
