use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn mapfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mapfuse")).args(args).env_remove("MAPFUSE_THREADS").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_small(dir: &Path) {
    let out = mapfuse(&["gen", "--out", s(dir), "--scenes", "3", "--test-scenes", "1", "--size", "64", "--seed", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&mapfuse(&["--help"])), 0);
    assert_eq!(code(&mapfuse(&["--version"])), 0);
    assert_eq!(code(&mapfuse(&[])), 1);
    assert_eq!(code(&mapfuse(&["frobnicate"])), 1);
    assert_eq!(code(&mapfuse(&["gen"])), 1);
    assert_eq!(code(&mapfuse(&["--threads", "0", "gen", "--out", "/tmp/never"])), 1);
}

#[test]
fn invalid_parameters_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = mapfuse(&["gen", "--out", s(&dir.path().join("d")), "--size", "32"]);
    assert_eq!(code(&out), 1);
    let out = mapfuse(&["gen", "--out", s(&dir.path().join("d")), "--p-drop", "1.5"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn missing_and_corrupt_data_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let out = mapfuse(&["train", "--data", s(&missing), "--out", s(&dir.path().join("run"))]);
    assert_eq!(code(&out), 2);

    let bad = dir.path().join("bad.mfr");
    fs::write(&bad, b"MFR1garbage").unwrap();
    let out = mapfuse(&["eval", "--pred", s(&bad), "--ref", s(&bad)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn flags_override_config_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.json");
    fs::write(&cfg, r#"{"seed": 9, "scenes": 5, "test_scenes": 2, "scene": {"size": 64}}"#).unwrap();
    let data = dir.path().join("d");
    let out = mapfuse(&["gen", "--out", s(&data), "--config", s(&cfg), "--scenes", "3", "--test-scenes", "1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let index: serde_json::Value = serde_json::from_str(&fs::read_to_string(data.join("dataset.json")).unwrap()).unwrap();
    assert_eq!(index["spec"]["scenes"], 3);
    assert_eq!(index["spec"]["seed"], 9);
    assert_eq!(index["size"], 64);
}

#[test]
fn gen_train_predict_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_small(&data);
    let run = dir.path().join("run");
    let out = mapfuse(&[
        "--threads", "1", "train", "--data", s(&data), "--out", s(&run), "--model", "rescorr", "--encoding", "sdt",
        "--epochs", "1", "--iterations-per-epoch", "3", "--patch-size", "32", "--batch-size", "2",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["model/checkpoint.mfw", "model/arch.json", "train_log.csv", "train_summary.json", "config.json", "eval.json"] {
        assert!(run.join(f).is_file(), "{f}");
    }
    let csv = fs::read_to_string(run.join("train_log.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let pred = dir.path().join("pred");
    let out = mapfuse(&["predict", "--run", s(&run), "--data", s(&data), "--out", s(&pred), "--window", "32", "--stride", "16"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let labels = pred.join("scene_002_labels.mfr");
    assert!(labels.is_file() && pred.join("scene_002_scores.mfr").is_file() && pred.join("scene_002_labels.ppm").is_file());

    let out = mapfuse(&["predict", "--run", s(&run), "--data", s(&data), "--out", s(&pred), "--encoding", "binary"]);
    assert_eq!(code(&out), 1);

    let heat = dir.path().join("heat.ppm");
    let reference = data.join("scenes/scene_002/labels.mfr");
    let out = mapfuse(&["eval", "--pred", s(&labels), "--ref", s(&reference), "--data", s(&data), "--heatmap", s(&heat)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["erode_radius"], 3);
    assert!(report["overall_accuracy"].as_f64().unwrap() <= 1.0);
    assert!(fs::read(&heat).unwrap().starts_with(b"P6"));

    // A label map scored against itself is perfect.
    let out = mapfuse(&["eval", "--pred", s(&reference), "--ref", s(&reference), "--erode", "0"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["overall_accuracy"], 1.0);
}

#[test]
fn diverging_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    gen_small(&data);
    let cfg = dir.path().join("train.json");
    fs::write(&cfg, r#"{"momentum": 0.0, "base_lr": 1e30}"#).unwrap();
    let out = mapfuse(&[
        "train", "--data", s(&data), "--out", s(&dir.path().join("run")), "--model", "osmnet", "--config", s(&cfg),
        "--epochs", "1", "--iterations-per-epoch", "4", "--patch-size", "32", "--batch-size", "2",
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}
