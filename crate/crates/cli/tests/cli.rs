use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prosody-slu"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A small corpus and model so the whole workflow runs in seconds.
const CONFIG: &str = r#"{
  "synth": {"utterance_seconds": 1.0, "train_per_intent": 3, "validation_per_intent": 1, "test_per_intent": 1},
  "features": {"crop_seconds": 1.0},
  "train": {"epochs": 2, "batch_size": 8, "model": {"hidden": 8, "lstm_hidden": 4}},
  "paths": {"data_dir": "data", "cache_dir": "cache"}
}"#;

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"train": {"learningrate": 0.01}}"#).unwrap();
    let o = cli(&["--config", "bad.json", "synth-data"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("learningrate"), "{err}");
    assert!(err.starts_with("error: config:"), "{err}");
}

#[test]
fn invalid_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.json"), r#"{"train": {"epochs": 0}}"#).unwrap();
    let o = cli(&["--config", "bad.json", "train"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("epochs"));
}

#[test]
fn runtime_failures_exit_1_with_stage() {
    let dir = tempfile::tempdir().unwrap();
    let o = cli(&["extract", "missing.wav", "out.txt"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error: extract:"), "{}", stderr(&o));

    let o = cli(&["compare", "nowhere"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("missing metrics"), "{}", stderr(&o));
}

#[test]
fn end_to_end_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(root.join("cfg.json"), CONFIG).unwrap();
    let run = |args: &[&str]| {
        let mut all = vec!["--config", "cfg.json"];
        all.extend_from_slice(args);
        let o = cli(&all, root);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
        o
    };

    run(&["synth-data"]);
    let manifest = fs::read_to_string(root.join("data/manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 40);

    run(&["--run-dir", "runs/teacher", "train", "--arch", "Teacher"]);
    for f in ["best.ckpt", "last.ckpt", "log.jsonl", "metrics.json", "config.json", "run_config.json"] {
        assert!(root.join("runs/teacher").join(f).is_file(), "{f}");
    }
    run(&[
        "--run-dir",
        "runs/student",
        "train",
        "--arch",
        "Student",
        "--teacher",
        "runs/teacher/best.ckpt",
    ]);
    run(&["--run-dir", "runs/plain", "--seed", "3", "train", "--arch", "BaselinePlain", "--epochs", "1"]);
    let log = fs::read_to_string(root.join("runs/plain/log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 1);

    let o = run(&[
        "eval",
        "--checkpoint",
        "runs/student/best.ckpt",
        "--manifest",
        "data/manifest.jsonl",
        "--split",
        "test",
    ]);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let acc = report["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(report["n"].as_u64(), Some(8));
    let saved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("runs/student/metrics.json")).unwrap()).unwrap();
    assert_eq!(report["config_hash"], saved["config_hash"]);
    assert_eq!(report["accuracy"], saved["accuracy"]);

    let first = manifest.lines().next().unwrap();
    let wav: serde_json::Value = serde_json::from_str(first).unwrap();
    let wav = format!("data/{}", wav["audio"].as_str().unwrap());
    run(&[
        "attn-dump",
        "--checkpoint",
        "runs/student/best.ckpt",
        "--wav",
        &wav,
        "--out",
        "alpha.csv",
    ]);
    let csv = fs::read_to_string(root.join("alpha.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("frame_index,time_seconds,alpha"));
    assert_eq!(csv.lines().count(), 1 + 49);

    run(&["extract", &wav, "prosody.feat"]);
    let dump = fs::read(root.join("prosody.feat")).unwrap();
    let nl = dump.iter().position(|&b| b == b'\n').unwrap();
    let header: serde_json::Value = serde_json::from_slice(&dump[..nl]).unwrap();
    assert_eq!(header["rows"], 98);
    assert_eq!(header["cols"], 6);
    assert_eq!(header["kind"], "prosody");
    assert_eq!(dump.len() - nl - 1, 98 * 6 * 4);

    let o = run(&["compare", "runs/teacher", "runs/student", "runs/plain", "--out", "table.json"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 4, "{text}");
    let table: serde_json::Value = serde_json::from_str(&fs::read_to_string(root.join("table.json")).unwrap()).unwrap();
    assert_eq!(table["rows"].as_array().unwrap().len(), 3);
}
