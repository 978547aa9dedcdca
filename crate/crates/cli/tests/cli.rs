use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn nlmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nlmap"))
        .arg("--config")
        .arg(fixtures().join("nlmap.toml"))
        .args(args)
        .env_remove("NLMAP_CONFIG")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn fixture(name: &str) -> String {
    fixtures().join(name).to_str().unwrap().to_string()
}

/// Builds the kitchen fixture map into `dir`.
fn kitchen_map(dir: &Path) -> PathBuf {
    let map = dir.join("kitchen.nlm");
    let out = nlmap(&["build", "--frames", &fixture("kitchen_frames.jsonl"), "--out", path(&map), "--stable"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    map
}

#[test]
fn build_two_frames() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("two.nlm");
    let out = nlmap(&["build", "--frames", &fixture("frames_two.jsonl"), "--out", path(&map)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("elements: 6"));
    assert_eq!(json(&out)["elements"], 6);
    assert!(map.exists());
}

#[test]
fn build_empty_frames() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("empty.nlm");
    let out = nlmap(&["build", "--frames", &fixture("frames_empty.jsonl"), "--out", path(&map)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["elements"], 0);
    let out = nlmap(&["query", "--map", path(&map), "--name", "apple"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["found"], false);
}

#[test]
fn build_malformed_line() {
    let dir = tempfile::tempdir().unwrap();
    let out =
        nlmap(&["build", "--frames", &fixture("frames_malformed.jsonl"), "--out", path(&dir.path().join("m.nlm"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
    assert!(!dir.path().join("m.nlm").exists());
}

#[test]
fn stable_builds_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.nlm"), dir.path().join("b.nlm"));
    for m in [&a, &b] {
        assert!(nlmap(&["build", "--frames", &fixture("kitchen_frames.jsonl"), "--out", path(m), "--stable"])
            .status
            .success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn query_present_absent_and_category() {
    let dir = tempfile::tempdir().unwrap();
    let map = kitchen_map(dir.path());
    let scene: Value =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("kitchen_scene.json")).unwrap()).unwrap();
    let truth = |label: &str| {
        let o = scene["objects"].as_array().unwrap().iter().find(|o| o["label"] == label).unwrap();
        (o["position"]["x"].as_f64().unwrap(), o["position"]["y"].as_f64().unwrap())
    };

    let out = nlmap(&["query", "--map", path(&map), "--name", "apple"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    let clusters = r["clusters"].as_array().unwrap();
    assert_eq!(clusters.len(), 1);
    let (x, y) = truth("apple");
    assert!((clusters[0]["position"]["x"].as_f64().unwrap() - x).abs() < 1e-6);
    assert!((clusters[0]["position"]["y"].as_f64().unwrap() - y).abs() < 1e-6);

    let out = nlmap(&["query", "--map", path(&map), "--name", "unicorn"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["found"], false);

    let out = nlmap(&["query", "--map", path(&map), "--name", "snack"]);
    assert_eq!(out.status.code(), Some(0));
    let r = json(&out);
    let clusters = r["clusters"].as_array().unwrap();
    assert!(clusters.len() >= 2);
    for label in ["chips", "candy"] {
        let (x, y) = truth(label);
        assert!(
            clusters
                .iter()
                .any(|c| (c["position"]["x"].as_f64().unwrap() - x).hypot(c["position"]["y"].as_f64().unwrap() - y)
                    < 0.1),
            "no cluster at {label}"
        );
    }
}

#[test]
fn query_writes_heatmaps() {
    let dir = tempfile::tempdir().unwrap();
    let map = kitchen_map(dir.path());
    let pgm = dir.path().join("apple.pgm");
    let out = nlmap(&["query", "--map", path(&map), "--name", "apple", "--heatmap", path(&pgm), "--cell", "0.25"]);
    assert_eq!(out.status.code(), Some(0));
    let bytes = std::fs::read(&pgm).unwrap();
    assert!(bytes.starts_with(b"P5\n"));
    let csv = std::fs::read_to_string(dir.path().join("apple.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    let cols = rows[0].split(',').count();
    assert!(rows.iter().all(|r| r.split(',').count() == cols));
    let header = String::from_utf8_lossy(&bytes[..bytes.len().min(64)]).to_string();
    assert!(header.contains(&format!("{cols} {}", rows.len())), "{header}");
}

#[test]
fn plan_peanuts_four_steps() {
    let dir = tempfile::tempdir().unwrap();
    let map = kitchen_map(dir.path());
    let out = nlmap(&["plan", "--map", path(&map), "--instruction", "Bring me the peanuts"]);
    assert_eq!(out.status.code(), Some(0));
    let plan = json(&out);
    let labels: Vec<&str> = plan["steps"].as_array().unwrap().iter().map(|s| s["label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["pick up the peanuts", "find the human", "put down the peanuts", "done"]);
    assert_eq!(plan["outcome"], "completed");
}

#[test]
fn plan_execute_moves_object() {
    let dir = tempfile::tempdir().unwrap();
    let map = kitchen_map(dir.path());
    let out = nlmap(&[
        "plan",
        "--map",
        path(&map),
        "--instruction",
        "Bring me the peanuts",
        "--execute",
        "--scene",
        &fixture("kitchen_scene.json"),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = json(&out);
    let world = &r["world"];
    let (px, py) =
        (world["objects"]["peanuts"]["x"].as_f64().unwrap(), world["objects"]["peanuts"]["y"].as_f64().unwrap());
    let (hx, hy) = (world["objects"]["human"]["x"].as_f64().unwrap(), world["objects"]["human"]["y"].as_f64().unwrap());
    assert!((px - hx).hypot(py - hy) < 1e-9);
    assert!(world["log"].as_array().unwrap().iter().all(|e| e["success"] == true));
    assert!(world["gripper"].is_null());
}

#[test]
fn plan_missing_object_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let map = kitchen_map(dir.path());
    let out = nlmap(&["plan", "--map", path(&map), "--instruction", "Bring me a wine glass"]);
    assert_eq!(out.status.code(), Some(0));
    let plan = json(&out);
    assert_eq!(plan["outcome"], "infeasible");
    assert_eq!(plan["steps"].as_array().unwrap().len(), 1);
}

#[test]
fn transport_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let map = kitchen_map(dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_nlmap"))
        .args(["--config", &fixture("nlmap.toml"), "plan", "--map", path(&map), "--instruction", "x"])
        .env("NLMAP_LLM__BACKEND", "remote")
        .env("NLMAP_LLM__REMOTE__BASE_URL", "http://127.0.0.1:9")
        .env("NLMAP_LLM__REMOTE__TIMEOUT_MS", "500")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_input_exits_1() {
    assert_eq!(nlmap(&["query", "--map", "/nonexistent.nlm", "--name", "apple"]).status.code(), Some(1));
    assert_eq!(nlmap(&["frobnicate"]).status.code(), Some(1));
    let out =
        Command::new(env!("CARGO_BIN_EXE_nlmap")).args(["config"]).env("NLMAP_FUSION__BOGUS", "1").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_dump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let first = nlmap(&["config"]);
    assert!(first.status.success());
    let dumped = dir.path().join("dumped.toml");
    std::fs::write(&dumped, &first.stdout).unwrap();
    let second =
        Command::new(env!("CARGO_BIN_EXE_nlmap")).args(["--config", path(&dumped), "config"]).output().unwrap();
    assert!(second.status.success());
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn simulate_report_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trials.csv");
    let out = nlmap(&[
        "simulate",
        "--suite",
        &fixture("benchmark_suite.json"),
        "--seed",
        "3",
        "--trials",
        "2",
        "--csv",
        path(&csv),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = json(&out);
    let families: Vec<&str> =
        report["families"].as_array().unwrap().iter().map(|f| f["family"].as_str().unwrap()).collect();
    assert_eq!(families, ["missing_objects", "novel_objects", "saycan_tasks"]);
    let records = report["records"].as_array().unwrap().len();
    assert_eq!(records, 24);
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), records + 1);
}
