mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn isarec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isarec"))
        .args(args)
        .env_remove("ISAREC_THREADS")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Synthetic dataset plus a config file with tiny settings.
fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let data = dir.join("data");
    let out = isarec(&["synth", "--out", s(&data), "--subjects", "3", "--clips", "4", "--set", "video_io.width=24", "--set", "video_io.height=16"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut cfg = common::tiny_settings();
    cfg.width = 24;
    cfg.height = 16;
    cfg.dataset_root = data.clone();
    let cfg_path = dir.join("tiny.cfg");
    fs::write(&cfg_path, cfg.to_string()).unwrap();
    (data, cfg_path)
}

#[test]
fn missing_dataset_root_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = isarec(&["evaluate", "--data", s(&dir.path().join("nope")), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
    let bad = isarec(&["--set", "isa.unknown=3", "evaluate", "--out", s(&dir.path().join("o"))]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn staged_commands_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg) = fixture(dir.path());
    let run = |out: &str, extra: &[&str]| {
        let out_dir = dir.path().join(out);
        let mut args = vec!["--config", s(&cfg), "--data", s(&data), "--out", s(&out_dir)];
        args.extend_from_slice(extra);
        let o = isarec(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out_dir
    };

    let a = run("a", &["pretrain", "--holdout", "subject0"]);
    let b = run("b", &["pretrain", "--holdout", "subject0"]);
    assert_eq!(fs::read(a.join("network_gray.txt")).unwrap(), fs::read(b.join("network_gray.txt")).unwrap());
    let resolved = fs::read_to_string(a.join("resolved_config")).unwrap();
    assert!(resolved.contains("[isa]") && resolved.contains("layer1_filters = 16"));

    let d = run("d", &["--modality", "depth", "pretrain"]);
    assert!(d.join("network_depth.txt").exists());

    let net = a.join("network_gray.txt");
    run("a", &["encode", "--network", s(&net), "--holdout", "subject0"]);
    let first = fs::read_to_string(a.join("histograms_gray.csv")).unwrap();
    let vocab = a.join("vocab_gray.txt");
    let c = run("c", &["encode", "--network", s(&net), "--vocab", s(&vocab)]);
    assert_eq!(first, fs::read_to_string(c.join("histograms_gray.csv")).unwrap());
    for line in first.lines().skip(1) {
        let sum: f64 = line.split(',').skip(2).map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() <= 1e-9);
    }

    run("a", &["train-svm", "--histograms", s(&a.join("histograms_gray.csv")), "--holdout", "subject0"]);
    assert!(fs::read_to_string(a.join("svm.txt")).unwrap().starts_with("ISAREC-SVM v1\n"));
}

#[test]
fn short_clips_are_skipped_with_a_reason() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg) = fixture(dir.path());
    let clip_dir = data.join("gray").join("s1_00_left");
    let mut i = 3;
    while fs::remove_file(clip_dir.join(isarec::video_io::frame_file_name(i))).is_ok() {
        i += 1;
    }
    assert!(i > 3);
    let out = dir.path().join("o");
    let o = isarec(&["--config", s(&cfg), "--out", s(&out), "pretrain"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let skipped = fs::read_to_string(out.join("skipped.csv")).unwrap();
    assert!(skipped.starts_with("clip_id,reason\n"));
    assert!(skipped.contains("s1_00_left,") && skipped.contains("smaller than one"));
}

#[test]
fn evaluate_single_split() {
    let dir = tempfile::tempdir().unwrap();
    let (data, cfg) = fixture(dir.path());
    let out = dir.path().join("eval");
    let o = isarec(&["--config", s(&cfg), "--data", s(&data), "--out", s(&out), "--threads", "1", "evaluate", "--splits", "subject1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["accuracy.txt", "confusion.csv", "per_split.csv", "resolved_config"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let per_split = fs::read_to_string(out.join("per_split.csv")).unwrap();
    assert_eq!(per_split.lines().count(), 2);
    assert!(per_split.lines().nth(1).unwrap().starts_with("subject1,4,"));
}
