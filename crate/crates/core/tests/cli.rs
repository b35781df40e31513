use std::path::Path;
use std::process::{Command, Output};

use rotatematch::pairing::load_pairs;
use rotatematch::synthetic::{generate_dataset, SynthConfig};

fn rotatematch(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rotatematch"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_dataset(dir: &Path) {
    let cfg = SynthConfig {
        scenes: 2,
        views_per_scene: 2,
        outliers: 1,
        base_size: 96,
        ..SynthConfig::default()
    };
    generate_dataset(&cfg, &dir.join("data")).unwrap();
}

#[test]
fn two_image_manifest_gives_one_pair_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        scenes: 1,
        views_per_scene: 2,
        outliers: 0,
        base_size: 64,
        ..SynthConfig::default()
    };
    generate_dataset(&cfg, &dir.path().join("data")).unwrap();
    let out = rotatematch(&["pair", "data/manifest.json", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(dir.path().join("o/pairs.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 1);
}

#[test]
fn missing_config_is_an_operational_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let out = rotatematch(&["run", "data/manifest.json", "--config", "absent.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("absent.cfg"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(rotatematch(&["bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(rotatematch(&["run"], dir.path()).status.code(), Some(2));
    assert_eq!(rotatematch(&["pair", "m.json", "--match-gate", "x"], dir.path()).status.code(), Some(2));
    assert_eq!(rotatematch(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn invalid_flag_values_are_operational_errors() {
    let dir = tempfile::tempdir().unwrap();
    small_dataset(dir.path());
    let out = rotatematch(&["pair", "data/manifest.json", "--rotations", "90,180"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let out = rotatematch(&["pair", "data/manifest.json", "--rotations", "45"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

fn write_clusters(path: &Path, json: &str) {
    std::fs::write(path, json).unwrap();
}

#[test]
fn evaluate_prints_four_decimals_and_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_clusters(&d.join("gt.json"), r#"{"clusters": [["a","b","c"],["d","e"]], "outliers": []}"#);
    write_clusters(&d.join("pred.json"), r#"{"clusters": [["a","b"],["c","d","e"]], "outliers": []}"#);

    let same = rotatematch(&["evaluate", "--gt", "gt.json", "--pred", "gt.json", "--out", "m1"], d);
    assert!(same.status.success(), "{}", stderr(&same));
    assert!(stdout(&same).contains("score 1.0000"));

    let worked = rotatematch(&["evaluate", "--gt", "gt.json", "--pred", "pred.json", "--out", "m2"], d);
    assert!(worked.status.success());
    let text = stdout(&worked);
    assert!(text.contains("maa 0.8333"), "{text}");
    assert!(text.contains("cl 0.8000"));
    assert!(text.contains("score 0.8163"));

    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("m2/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["aggregate"]["cl"], 0.8);
    assert_eq!(metrics["datasets"][0]["per_cluster_accuracy"][1], 1.0);
}

#[test]
fn evaluate_rejects_mismatched_universes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_clusters(&d.join("gt.json"), r#"{"clusters": [["a","b"]], "outliers": ["c"]}"#);
    write_clusters(&d.join("pred.json"), r#"{"clusters": [["a","b"]], "outliers": ["z"]}"#);
    let out = rotatematch(&["evaluate", "--gt", "gt.json", "--pred", "pred.json"], d);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("\"c\"") && err.contains("\"z\""), "{err}");

    write_clusters(&d.join("bad.json"), r#"{"clusters": [["a"]]}"#);
    let out = rotatematch(&["evaluate", "--gt", "gt.json", "--pred", "bad.json"], d);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn stages_run_separately_and_match_honours_edited_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_dataset(d);
    let m = "data/manifest.json";
    for args in [vec!["pair", m, "--out", "s"], vec!["extract", m, "--out", "s", "--rotations", "0,90"]] {
        let out = rotatematch(&args, d);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let pairs = load_pairs(&d.join("s/pairs.jsonl")).unwrap();
    assert_eq!(pairs.len(), 10);

    // Keep two pairs only.
    let text = std::fs::read_to_string(d.join("s/pairs.jsonl")).unwrap();
    let kept: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
    std::fs::write(d.join("s/pairs.jsonl"), kept).unwrap();

    let out = rotatematch(
        &["match", m, "--pairs", "s/pairs.jsonl", "--features", "s/features.rmkp", "--out", "s", "--rotations", "0,90"],
        d,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let matches = std::fs::read_to_string(d.join("s/matches.jsonl")).unwrap();
    assert_eq!(matches.lines().count(), 2);
    for line in matches.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["stage1"]["180"], 0);
        assert_eq!(v["stage2"]["270"], 0);
    }

    let out = rotatematch(&["cluster", m, "--matches", "s/matches.jsonl", "--out", "s"], d);
    assert!(out.status.success(), "{}", stderr(&out));
    let clusters: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("s/clusters.json")).unwrap()).unwrap();
    let members = clusters["clusters"].as_array().unwrap().iter().map(|c| c.as_array().unwrap().len()).sum::<usize>();
    let outliers = clusters["outliers"].as_array().unwrap().len();
    assert_eq!(members + outliers, 5);
}

#[test]
fn match_gate_flag_changes_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_dataset(d);
    let out = rotatematch(&["run", "data/manifest.json", "--out", "o", "--match-gate", "1000000"], d);
    assert!(out.status.success(), "{}", stderr(&out));
    let run_dir = std::fs::read_dir(d.join("o")).unwrap().next().unwrap().unwrap().path();
    let clusters = std::fs::read_to_string(run_dir.join("clusters.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&clusters).unwrap();
    assert_eq!(v["clusters"].as_array().unwrap().len(), 0);
    assert_eq!(v["outliers"].as_array().unwrap().len(), 5);
}

#[test]
fn viz_renders_one_line_per_correspondence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_dataset(d);
    let out = rotatematch(&["run", "data/manifest.json", "--out", "o"], d);
    assert!(out.status.success(), "{}", stderr(&out));
    let run_dir = std::fs::read_dir(d.join("o")).unwrap().next().unwrap().unwrap().path();
    let matches = run_dir.join("matches.jsonl");
    let first: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(&matches).unwrap().lines().next().unwrap()).unwrap();
    let (a, b) = (first["a"].as_str().unwrap(), first["b"].as_str().unwrap());
    let n = first["correspondences"].as_array().unwrap().len();

    let m = matches.to_str().unwrap();
    // Either argument order finds the pair.
    let out = rotatematch(&["viz", m, "data/manifest.json", b, a, "--out", "pair.svg"], d);
    assert!(out.status.success(), "{}", stderr(&out));
    let svg = std::fs::read_to_string(d.join("pair.svg")).unwrap();
    assert_eq!(svg.matches("<line ").count(), n);
    assert_eq!(svg.matches("data:image/png;base64,").count(), 2);

    let out = rotatematch(&["viz", m, "data/manifest.json", a, "nobody"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("not found"));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_dataset(d);
    std::fs::write(d.join("run.cfg"), "# small run\nexhaustive_threshold = 2\nmin_pairs = 3\n").unwrap();
    let out = rotatematch(&["pair", "data/manifest.json", "--config", "run.cfg", "--out", "a"], d);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(load_pairs(&d.join("a/pairs.jsonl")).unwrap().len(), 3);
    let out = rotatematch(
        &["pair", "data/manifest.json", "--config", "run.cfg", "--min-pairs", "4", "--out", "b"],
        d,
    );
    assert!(out.status.success());
    assert_eq!(load_pairs(&d.join("b/pairs.jsonl")).unwrap().len(), 4);
    let out = rotatematch(
        &["pair", "data/manifest.json", "--config", "run.cfg", "--exhaustive-threshold", "20", "--out", "c"],
        d,
    );
    assert!(out.status.success());
    assert_eq!(load_pairs(&d.join("c/pairs.jsonl")).unwrap().len(), 10);
}

#[test]
fn log_level_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_dataset(d);
    let out = Command::new(env!("CARGO_BIN_EXE_rotatematch"))
        .args(["pair", "data/manifest.json", "--jobs", "2"])
        .env("ROTATEMATCH_LOG", "debug")
        .current_dir(d)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(stderr(&out).contains("exhaustive pairing"));
}

#[test]
fn synth_writes_manifest_and_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = rotatematch(&["synth", "--out", "ds", "--seed", "9", "--scenes", "2", "--views", "3", "--outliers", "2"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let gt: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("ds/gt.json")).unwrap()).unwrap();
    assert_eq!(gt["clusters"].as_array().unwrap().len(), 2);
    assert_eq!(gt["outliers"].as_array().unwrap().len(), 2);
    assert_eq!(std::fs::read_dir(dir.path().join("ds/images")).unwrap().count(), 8);
}
