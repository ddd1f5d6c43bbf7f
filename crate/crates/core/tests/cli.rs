use std::path::Path;
use std::process::{Command, Output};

fn alphasne(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alphasne")).args(args).output().unwrap()
}

fn result_line(out: &Output) -> String {
    let stdout = String::from_utf8_lossy(&out.stdout);
    stdout.lines().find(|l| l.starts_with("RESULT")).unwrap_or_else(|| panic!("no RESULT in {stdout}")).to_string()
}

fn field(line: &str, key: &str) -> String {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from {line}"))
        .to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const FAST: [&str; 2] = ["--iters", "120"];

#[test]
fn embed_then_evaluate_reproduces_the_auc() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let r = alphasne(&[&["embed", "--dataset", "iris", "--alpha", "0.5", "--out-dir", s(&out)][..], &FAST].concat());
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let auc: f64 = field(&result_line(&r), "auc").parse().unwrap();
    assert!(auc > 0.0 && auc <= 1.0);
    for f in ["embedding.csv", "curve.csv", "metrics.json"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let emb = out.join("embedding.csv");
    let e = alphasne(&["evaluate", "--dataset", "iris", "--embedding", s(&emb), "--out-dir", s(&dir.path().join("ev"))]);
    assert!(e.status.success());
    assert_eq!(field(&result_line(&e), "auc").parse::<f64>().unwrap(), auc);

    let m = alphasne(&["evaluate", "--dataset", "wine", "--embedding", s(&emb), "--out-dir", s(&dir.path().join("ev2"))]);
    assert_eq!(m.status.code(), Some(1));
    let err = String::from_utf8_lossy(&m.stderr);
    assert!(err.contains("150") && err.contains("178"), "{err}");
}

#[test]
fn identical_runs_write_identical_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let mut texts = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        let r = alphasne(&[&["embed", "--dataset", "iris", "--alpha", "0.8", "--seed", "4", "--out-dir", s(&out)][..], &FAST].concat());
        assert!(r.status.success());
        texts.push((std::fs::read(out.join("metrics.json")).unwrap(), std::fs::read(out.join("embedding.csv")).unwrap()));
    }
    assert_eq!(texts[0], texts[1]);
}

#[test]
fn usage_errors_exit_with_two() {
    assert_eq!(alphasne(&["embed", "--dataset", "iris"]).status.code(), Some(2));
    assert_eq!(alphasne(&["embed", "--alpha", "0.5"]).status.code(), Some(2));
    assert_eq!(alphasne(&["embed", "--dataset", "iris", "--data", "x.csv", "--alpha", "1"]).status.code(), Some(2));
    assert_eq!(alphasne(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let r = alphasne(&["embed", "--data", s(&missing), "--alpha", "0.5", "--out-dir", s(dir.path())]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).starts_with("error:"));
}

#[test]
fn single_value_sweep_and_curve() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let r = alphasne(&[
        &["sweep-alpha", "--dataset", "iris", "--alpha-grid", "0.7", "--repeats", "2", "--out-dir", s(&out)][..],
        &FAST,
    ]
    .concat());
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let table = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0.7,"));

    let csv = dir.path().join("alpha.csv");
    let c = alphasne(&["curve", "--input", s(&out.join("sweep.json")), "--output", s(&csv)]);
    assert!(c.status.success());
    assert_eq!(field(&result_line(&c), "rows"), "1");
}

#[test]
fn single_candidate_estimate_selects_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eda");
    let r = alphasne(&[
        &["estimate-alpha", "--dataset", "iris", "--alpha-grid", "0.6", "--out-dir", s(&out)][..],
        &FAST,
    ]
    .concat());
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    assert_eq!(field(&result_line(&r), "selected_alpha"), "0.6");
    let metrics: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["selected_alpha"], 0.6);
    assert_eq!(metrics["alpha_grid"].as_array().unwrap().len(), 1);
    assert!(out.join("alpha_curve.csv").exists());

    let csv = dir.path().join("alpha.csv");
    let c = alphasne(&["curve", "--input", s(&out.join("eda.json")), "--output", s(&csv)]);
    assert!(c.status.success());
    let bad = alphasne(&["curve", "--input", s(&out.join("metrics.json")), "--output", s(&csv)]);
    assert_eq!(bad.status.code(), Some(1));
}
