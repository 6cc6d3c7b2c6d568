//! End-to-end tests of the `samp` binary.

use std::path::Path;
use std::process::{Command, Output};

fn samp(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_samp"))
        .args(args)
        .current_dir(cwd)
        .env("SAMP_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn small_data(cwd: &Path, name: &str) {
    let out = samp(
        &["gen-data", "--family", "tetromino", "--out", name, "--seed", "7", "--train-size", "24", "--val-size", "8", "--test-size", "8"],
        cwd,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_data_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    small_data(tmp.path(), "a");
    small_data(tmp.path(), "b");
    let a = dir_bytes(&tmp.path().join("a"));
    assert_eq!(a.len(), 4);
    assert_eq!(a, dir_bytes(&tmp.path().join("b")));
}

#[test]
fn train_eval_viz_flow() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    small_data(cwd, "d");
    std::fs::write(cwd.join("c.json"), r#"{"batch_size": 4, "steps": 2, "warmup_steps": 1}"#).unwrap();
    let out = samp(&["train", "--config", "c.json", "--data", "d", "--out", "run1"], cwd);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = cwd.join("run1");
    assert!(run.join("metrics.csv").is_file());
    assert!(run.join("config.json").is_file());
    assert!(run.join("last").is_file());
    assert!(std::fs::read_dir(run.join("checkpoints")).unwrap().count() >= 1);
    let config = std::fs::read_to_string(run.join("config.json")).unwrap();
    assert!(config.contains("dataset_fingerprint"));

    let out = samp(&["eval", "--ckpt", "run1/last", "--data", "d", "--split", "test"], cwd);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("FG-ARI") && text.contains('±'), "{text}");
    assert!(run.join("eval_test.csv").is_file());
    assert!(run.join("eval_test.json").is_file());

    let out = samp(&["viz", "--ckpt", "run1/last", "--data", "d", "--n", "2", "--out", "img"], cwd);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let first = dir_bytes(&cwd.join("img"));
    assert_eq!(first.len(), 4);
    let out = samp(&["viz", "--ckpt", "run1/last", "--data", "d", "--n", "2", "--out", "img"], cwd);
    assert!(out.status.success());
    assert_eq!(first, dir_bytes(&cwd.join("img")));
}

#[test]
fn resume_continues_a_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    small_data(cwd, "d");
    std::fs::write(cwd.join("c.json"), r#"{"batch_size": 2, "steps": 4, "warmup_steps": 1, "checkpoint_every": 2}"#).unwrap();
    assert!(samp(&["train", "--config", "c.json", "--data", "d", "--out", "full"], cwd).status.success());
    assert!(samp(&["train", "--config", "c.json", "--data", "d", "--out", "part", "--steps", "2"], cwd).status.success());
    let out = samp(&["train", "--data", "d", "--out", "part", "--resume", "--steps", "4"], cwd);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let full = std::fs::read(cwd.join("full/metrics.csv")).unwrap();
    assert_eq!(full, std::fs::read(cwd.join("part/metrics.csv")).unwrap());
    assert_eq!(std::fs::read(cwd.join("full/last")).unwrap(), std::fs::read(cwd.join("part/last")).unwrap());
}

#[test]
fn ablate_emits_table() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    small_data(cwd, "d");
    let out = samp(
        &["ablate", "--data", "d", "--out", "abl", "--axis", "n_slots", "--values", "4,8", "--seeds", "0", "--steps", "1"],
        cwd,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(cwd.join("abl/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(String::from_utf8_lossy(&out.stdout).contains("n_slots"));
}

#[test]
fn usage_errors_exit_1_and_runtime_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cwd = tmp.path();
    assert_eq!(samp(&["frobnicate"], cwd).status.code(), Some(1));
    assert_eq!(samp(&["gen-data", "--out", "x", "--bogus"], cwd).status.code(), Some(1));
    assert_eq!(samp(&["train", "--data", "d"], cwd).status.code(), Some(1));
    assert_eq!(samp(&["eval", "--ckpt", "missing", "--data", "missing"], cwd).status.code(), Some(2));
    assert_eq!(samp(&["gen-data", "--family", "blob", "--out", "x"], cwd).status.code(), Some(2));
    assert_eq!(samp(&["--help"], cwd).status.code(), Some(0));
}
