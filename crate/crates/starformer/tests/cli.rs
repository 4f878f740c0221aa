mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::small_cohort;
use serde_json::Value;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_starformer"))
        .args(args)
        .env("STARFORMER_THREADS", "1")
        .output()
        .unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Parses the single JSON error line on stderr.
fn error_json(out: &Output) -> Value {
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "{stderr}");
    let v: Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(v["status"], "error");
    assert_eq!(v["exit"].as_i64().map(|e| e as i32), out.status.code());
    v
}

#[test]
fn help_exits_zero_everywhere() {
    assert!(cli(&["--help"]).status.success());
    for sub in ["gen-synthetic", "connectivity", "centrality", "train", "eval", "explain", "audit-complexity"] {
        let out = cli(&[sub, "--help"]);
        assert!(out.status.success(), "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("--out"), "{sub}");
    }
}

#[test]
fn usage_errors_exit_two() {
    for args in [&["frobnicate"][..], &["train"], &["audit-complexity", "--out", "x", "--m", "abc"]] {
        let out = cli(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(error_json(&out)["code"], "usage");
    }
}

#[test]
fn invalid_schedule_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["audit-complexity", "--schedule", "16,8,4", "--out", p(&dir.path().join("a.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["kind"], "config");
}

#[test]
fn data_errors_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = cli(&["connectivity", "--data", p(&dir.path().join("none.json")), "--out", p(&dir.path().join("g"))]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["code"], "missing_file");

    let manifest = small_cohort(dir.path());
    let subject = manifest.parent().unwrap().join("subjects/sub-0002.csv");
    let text = fs::read_to_string(&subject).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let mut cells: Vec<&str> = lines[5].split(',').collect();
    cells[1] = "NaN";
    lines[5] = cells.join(",");
    fs::write(&subject, lines.join("\n") + "\n").unwrap();
    let out = cli(&["connectivity", "--data", p(&manifest), "--out", p(&dir.path().join("g"))]);
    assert_eq!(out.status.code(), Some(3));
    let err = error_json(&out);
    assert_eq!(err["code"], "non_finite_cell");
    let msg = err["message"].as_str().unwrap();
    assert!(msg.contains("sub-0002") && msg.contains("time point 4") && msg.contains("roi001"), "{msg}");
}

#[test]
fn divergence_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    starformer::synthetic::generate_synthetic(&starformer::formats::read_json(&common::bundled_spec()).unwrap(), &data).unwrap();
    let manifest = data.join("manifest.json");
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"profile": "synthetic", "folds": 3, "train": {"epochs": 2, "lr_init": 1e200, "lr_max": 1e300, "lr_final": 1e200}}"#,
    )
    .unwrap();
    let out = cli(&["train", "--data", p(&manifest), "--config", p(&cfg), "--max-folds", "1", "--out", p(&dir.path().join("run"))]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(error_json(&out)["kind"], "numeric");
}

#[test]
fn output_directory_must_be_empty() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("x"), "").unwrap();
    let out = cli(&["gen-synthetic", "--spec", p(&common::bundled_spec()), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["code"], "output_exists");
}

#[test]
fn small_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let manifest = small_cohort(d);
    let data = manifest.parent().unwrap();
    let ok = |args: &[&str]| {
        let out = cli(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8(out.stdout).unwrap();
        let v: Value = serde_json::from_str(stdout.trim()).unwrap();
        assert_eq!(v["status"], "ok");
        v
    };
    ok(&["connectivity", "--data", p(&manifest), "--out", p(&d.join("g"))]);
    let index: Value = serde_json::from_slice(&fs::read(d.join("g/index.json")).unwrap()).unwrap();
    assert_eq!(index["subjects"].as_array().unwrap().len(), 12);
    ok(&["centrality", "--g-dir", p(&d.join("g")), "--atlas", p(&data.join("atlas.csv")), "--seed", "3", "--out", p(&d.join("ord.json"))]);
    let ord: Value = serde_json::from_slice(&fs::read(d.join("ord.json")).unwrap()).unwrap();
    let mut perm: Vec<u64> = ord["permutation"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    perm.sort_unstable();
    assert_eq!(perm, (0..8).collect::<Vec<_>>());

    let cfg = d.join("cfg.json");
    fs::write(&cfg, r#"{"profile": "synthetic", "folds": 3, "train": {"epochs": 2}}"#).unwrap();
    ok(&["train", "--data", p(&manifest), "--config", p(&cfg), "--ordering", p(&d.join("ord.json")), "--seed", "4", "--out", p(&d.join("run"))]);
    for f in ["metrics.json", "metrics.csv", "loss_curve.csv", "predictions.csv", "config.json", "checkpoints/fold-02.ckpt"] {
        assert!(d.join("run").join(f).is_file(), "{f}");
    }
    let metrics: Value = serde_json::from_slice(&fs::read(d.join("run/metrics.json")).unwrap()).unwrap();
    assert_eq!((metrics["seed"].as_u64(), metrics["per_fold"].as_array().unwrap().len()), (Some(4), 3));
    let predictions = fs::read_to_string(d.join("run/predictions.csv")).unwrap();
    assert_eq!(predictions.lines().count(), 13);

    let ck = d.join("run/checkpoints/fold-00.ckpt");
    ok(&["eval", "--checkpoint", p(&ck), "--data", p(&manifest), "--out", p(&d.join("eval.json"))]);
    let eval: Value = serde_json::from_slice(&fs::read(d.join("eval.json")).unwrap()).unwrap();
    assert_eq!(eval["subjects"].as_array().unwrap().len(), 12);
    ok(&["explain", "--checkpoint", p(&ck), "--data", p(&manifest), "--top", "0.25", "--out", p(&d.join("imp.csv"))]);
    let table = fs::read_to_string(d.join("imp.csv")).unwrap();
    assert_eq!(table.lines().count(), 9);
    let meta: Value = serde_json::from_slice(&fs::read(d.join("imp.json")).unwrap()).unwrap();
    assert_eq!(meta["top_rois"].as_array().unwrap().len(), 2);

    // A checkpoint is refused on data with a different ROI count.
    let other = d.join("other");
    starformer::synthetic::generate_synthetic(&common::small_spec(6, 128, 2, 1), &other).unwrap();
    let out = cli(&["eval", "--checkpoint", p(&ck), "--data", p(&other.join("manifest.json")), "--out", p(&d.join("e2.json"))]);
    assert_ne!(out.status.code(), Some(0));
    error_json(&out);
}

#[test]
fn audit_reports_per_layer_factors() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("audit.json");
    let out = cli(&["audit-complexity", "--out", p(&out_path)]);
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&fs::read(&out_path).unwrap()).unwrap();
    let layers = v["layers"].as_array().unwrap();
    assert_eq!(layers.len(), 6);
    assert!(layers[0]["reduction_factor"].as_f64().unwrap() >= 4.0);
}
