use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn clinlm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clinlm")).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, format!("seed = 1\nout_dir = \"out\"\n{body}")).unwrap();
    p
}

fn data(rel: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(rel).display().to_string()
}

#[test]
fn missing_corpus_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[paths]\ncorpus = \"nowhere.txt\"\n");
    let o = clinlm(&["tokenize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("paths.corpus"), "{}", stderr(&o));
    assert!(!dir.path().join("out/tokenize").exists());
}

#[test]
fn sft_without_a_checkpoint_fails_pre_flight() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("pipeline = [\"tokenize\", \"sft\"]\n[paths]\ncorpus = \"{}\"\n", data("toy_corpus.txt"));
    let cfg = write_config(dir.path(), &body);
    let o = clinlm(&["pipeline", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("pre-flight for stage `sft`") && err.contains("paths.base_model"), "{err}");
    assert!(!dir.path().join("out/tokenize").exists(), "nothing runs when pre-flight fails");
}

#[test]
fn empty_pipeline_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "pipeline = []\n");
    let o = clinlm(&["pipeline", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn config_is_required() {
    let o = clinlm(&["tokenize"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--config"));
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[lora]\nrnak = 4\n");
    let o = clinlm(&["tokenize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rnak"), "{}", stderr(&o));
}

#[test]
fn invalid_values_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[lora]\nrank = 0\n");
    let o = clinlm(&["tokenize", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("lora.rank"), "{}", stderr(&o));
}

#[test]
fn tokenize_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!("[paths]\ncorpus = \"{}\"\n[tokenizer]\nvocab_size = 300\n", data("toy_corpus.txt"));
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("elsewhere");
    let o = clinlm(&["tokenize", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "--seed", "9"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("tokenize/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["seed"], 9);
    assert_eq!(m["inputs"][0]["field"], "paths.corpus");
    assert!(m["outputs"]["tokenizer.txt"].is_string());
    assert!(out.join("tokenize/tokenizer.txt").exists());
}
