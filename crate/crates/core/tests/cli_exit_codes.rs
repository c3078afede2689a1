use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sitter(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sitter"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .output()
        .unwrap()
}

fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("small.cfg");
    let text = format!(
        "[synth]\nn_identities = 12\nitems_per_identity = 4\n\n[train]\nmax_epochs = 2\nlearning_rate = 1e-3\n{extra}"
    );
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn bad_ratios_exit_2_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "[split]\ntrain = 0.5\nval = 0.2\ntest = 0.2\n").unwrap();
    let out = sitter(dir.path(), &["--config", cfg.to_str().unwrap(), "synth"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("split"));
}

#[test]
fn unknown_flag_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        sitter(dir.path(), &["synth", "--bogus"]).status.code(),
        Some(2)
    );
}

#[test]
fn missing_upstream_artifact_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = sitter(dir.path(), &["split"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("manifest.txt"));
}

#[test]
fn fusing_an_absent_source_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(
        dir.path(),
        "\n[fusion]\nsystems = [[\"clip-base\", \"nope-base\"]]\n",
    );
    for cmd in [
        "synth",
        "split",
        "pairs",
        "train-lora",
        "train-head",
        "embed",
    ] {
        let out = sitter(dir.path(), &["--config", &cfg, cmd]);
        assert!(
            out.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out = sitter(dir.path(), &["--config", &cfg, "fuse"]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope-base"));
}

#[test]
fn eval_is_deterministic_and_logged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = sitter(dir.path(), &["--config", &cfg, "run"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let first = fs::read(dir.path().join("report.csv")).unwrap();
    let out = sitter(dir.path(), &["--config", &cfg, "eval"]);
    assert!(out.status.success());
    assert_eq!(fs::read(dir.path().join("report.csv")).unwrap(), first);

    let log = fs::read_to_string(dir.path().join("run_log.jsonl")).unwrap();
    let last: serde_json::Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    assert_eq!(last["command"], "eval");
    assert!(last["outputs"]["report.csv"].as_str().unwrap().len() == 64);
}
