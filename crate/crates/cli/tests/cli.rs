use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fixmark_core::data::{group_sequences, parse_str, IngestFormat};
use fixmark_core::Dataset;
use serde_json::Value;

const SAMPLE: &str = "\
80.4, 74.8, 980, 10, a5, abnormal, 53, landscape
-213.4, 111.6, 246, 6, n5, normal, 48, landscape
499.9, 151.8, 241, 10, a5, abnormal, 11, landscape
-32.7, 146.3, 150, 5, a3, abnormal, 51, landscape
-256.3, 183.6, 135, 10, n3, normal, 4, landscape
112.6, 86.0, 276, 12, g7, grayscale, 47, landscape
214.5, -133.9, 295, 10, a4, abnormal, 59, landscape
409.3, 0.8, 225, 12, a9, abnormal, 30, landscape
226.4, -343.8, 413, 3, g2, grayscale, 44, landscape
-111.0, -115.2, 157, 8, a10, abnormal, 25, landscape
";

fn fixmark(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fixmark"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn markov_spec(image: u32, scheme: &str, seed: u64, subjects: usize) -> Value {
    serde_json::json!({
        "k": 3,
        "initial_probs": [0.4, 0.3, 0.3],
        "transition_matrix": [[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]],
        "emissions": [
            {"mean": {"x": -300.0, "y": -100.0}, "sd": [40.0, 40.0]},
            {"mean": {"x": 300.0, "y": -100.0}, "sd": [40.0, 40.0]},
            {"mean": {"x": 0.0, "y": 250.0}, "sd": [40.0, 40.0]}
        ],
        "subjects": subjects,
        "fixations_per_subject": {"min": 20, "max": 30},
        "duration_model": {"base_ms": 200.0, "density_coupling": 1.0},
        "seed": seed,
        "image_id": image,
        "scheme": scheme
    })
}

fn blob_spec(image: u32, seed: u64, subjects: usize) -> Value {
    serde_json::json!({
        "k": 1,
        "initial_probs": [1.0],
        "transition_matrix": [[1.0]],
        "emissions": [{"mean": {"x": 0.0, "y": 0.0}, "sd": [150.0, 100.0]}],
        "subjects": subjects,
        "fixations_per_subject": 25,
        "duration_model": {"base_ms": 250.0, "density_coupling": 1.0},
        "seed": seed,
        "image_id": image,
        "scheme": "grayscale"
    })
}

/// Three images in each scheme; coloured ones Markovian, grayscale i.i.d.
fn write_pipeline_spec(dir: &Path) -> PathBuf {
    let mut specs = Vec::new();
    for image in 1..=3 {
        specs.push(markov_spec(image, "normal", image as u64, 4));
        specs.push(markov_spec(image, "abnormal", 10 + image as u64, 4));
        specs.push(blob_spec(image, 20 + image as u64, 4));
    }
    let path = dir.join("spec.json");
    fs::write(&path, serde_json::to_string_pretty(&specs).unwrap()).unwrap();
    path
}

#[test]
fn ingest_valid_fixture_lists_three_schemes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("raw.csv"), SAMPLE).unwrap();
    let o = fixmark(dir.path(), &["ingest", "--input", "raw.csv", "--out-dir", "o"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("3 schemes"), "{out}");
    let ds = Dataset::from_json(&fs::read_to_string(dir.path().join("o/dataset.json")).unwrap()).unwrap();
    assert_eq!(ds.fixation_count(), 10);
}

#[test]
fn ingest_reports_the_malformed_line() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::new();
    for i in 1..=16 {
        text.push_str(&format!("{i}.0, 2.0, 200, {i}, n1, normal, 1, landscape\n"));
    }
    text.push_str("17.0, oops, 200, 17, n1, normal, 1, landscape\n");
    fs::write(dir.path().join("raw.csv"), text).unwrap();
    let o = fixmark(dir.path(), &["ingest", "--input", "raw.csv"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("line 17"), "{}", stderr(&o));
}

#[test]
fn ingest_empty_file_warns_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.csv"), "").unwrap();
    let o = fixmark(dir.path(), &["ingest", "--input", "empty.csv", "--out-dir", "o"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    let ds = Dataset::from_json(&fs::read_to_string(dir.path().join("o/dataset.json")).unwrap()).unwrap();
    assert!(ds.is_empty());
}

#[test]
fn missing_input_is_actionable() {
    let dir = tempfile::tempdir().unwrap();
    let o = fixmark(dir.path(), &["score"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("--input"), "{}", stderr(&o));
    let o = fixmark(dir.path(), &["roc", "--out-dir", "nowhere"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("fixmark score"), "{}", stderr(&o));
}

#[test]
fn simulate_then_ingest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_pipeline_spec(dir.path());
    let o = fixmark(dir.path(), &["simulate", "--spec", spec.to_str().unwrap(), "--out", "sim.csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("sim.states.csv").exists());
    let o = fixmark(dir.path(), &["ingest", "--input", "sim.csv", "--out-dir", "o"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let raw = fs::read_to_string(dir.path().join("sim.csv")).unwrap();
    let direct = group_sequences(&parse_str(&raw, IngestFormat::default()).unwrap()).unwrap();
    let ingested = Dataset::from_json(&fs::read_to_string(dir.path().join("o/dataset.json")).unwrap()).unwrap();
    assert_eq!(direct, ingested);
    assert_eq!(ingested.image_schemes().len(), 9);
    // the sidecar never leaks into the dataset format
    assert!(!raw.contains("state"));
}

#[test]
fn k_max_two_limits_reported_ks() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_pipeline_spec(dir.path());
    assert!(fixmark(dir.path(), &["simulate", "--spec", spec.to_str().unwrap(), "--out", "sim.csv"]).status.success());
    let o = fixmark(
        dir.path(),
        &["score", "--input", "sim.csv", "--out-dir", "o", "--k-max", "2", "--mc-samples", "200"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("o/reports/image0001_normal.json")).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    let keys: Vec<&String> = v["report"]["per_k"].as_object().unwrap().keys().collect();
    assert_eq!(keys, vec!["1", "2"]);
    assert_eq!(v["config"]["k_max"], 2);
    let header = fs::read_to_string(dir.path().join("o/log2_bf.csv")).unwrap();
    assert!(header.starts_with("image,scheme,selected_k,strongest_bf,strongest_log2_bf,log2_bf_k1,log2_bf_k2\n"));
}

#[test]
fn perfectly_separated_reports_give_unit_auc() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_pipeline_spec(dir.path());
    assert!(fixmark(dir.path(), &["simulate", "--spec", spec.to_str().unwrap(), "--out", "sim.csv"]).status.success());
    let o = fixmark(
        dir.path(),
        &["score", "--input", "sim.csv", "--out-dir", "o", "--k-max", "4", "--estimator", "exact"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = fixmark(dir.path(), &["roc", "--out-dir", "o"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("o/roc.json")).unwrap()).unwrap();
    assert_eq!(v["auc"], 1.0);
    let csv = fs::read_to_string(dir.path().join("o/roc.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().ends_with(",-inf,0.0,0.0"));
    assert!(csv.trim_end().lines().last().unwrap().starts_with("inf,inf,1.0,1.0"));
}

#[test]
fn partial_failures_exit_nonzero_but_keep_other_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let specs = vec![markov_spec(1, "normal", 1, 3), markov_spec(2, "normal", 2, 1)];
    fs::write(dir.path().join("spec.json"), serde_json::to_string(&specs).unwrap()).unwrap();
    assert!(fixmark(dir.path(), &["simulate", "--spec", "spec.json", "--out", "sim.csv"]).status.success());
    let o = fixmark(
        dir.path(),
        &["score", "--input", "sim.csv", "--out-dir", "o", "--k-max", "3", "--estimator", "exact"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("image 2"), "{}", stderr(&o));
    assert!(dir.path().join("o/reports/image0001_normal.json").exists());
    let summary: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("o/score_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["failures"].as_array().unwrap().len(), 1);
}

#[test]
fn config_file_is_used_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_pipeline_spec(dir.path());
    assert!(fixmark(dir.path(), &["simulate", "--spec", spec.to_str().unwrap(), "--out", "sim.csv"]).status.success());
    fs::write(
        dir.path().join("run.json"),
        r#"{"input": "sim.csv", "out_dir": "cfg_out", "k_max": 3, "estimator": "closed_form", "seed": 5}"#,
    )
    .unwrap();
    let o = fixmark(dir.path(), &["score", "--config", "run.json", "--seed", "6"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cfg_out/score_summary.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["k_max"], 3);
    assert_eq!(v["config"]["seed"], 6);
    assert_eq!(v["config"]["estimator"], "closed_form");
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn analysis_commands_write_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_pipeline_spec(dir.path());
    assert!(fixmark(dir.path(), &["simulate", "--spec", spec.to_str().unwrap(), "--out", "sim.csv"]).status.success());
    let o = fixmark(dir.path(), &["saccades", "--input", "sim.csv", "--out-dir", "o"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("o/saccades.txt")).unwrap();
    for label in ["Norm - Abno:  p ", "Norm - Gray:  p ", "Abno - Gray:  p "] {
        assert_eq!(text.matches(label).count(), 3, "{text}");
    }
    let o = fixmark(dir.path(), &["duration", "--input", "sim.csv", "--out-dir", "o", "--per-image"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("o/duration.json")).unwrap()).unwrap();
    assert!(v["pooled"]["normal"]["ci"].is_array());
    assert_eq!(v["per_image"].as_array().unwrap().len(), 9);
    let o = fixmark(
        dir.path(),
        &["fit", "--input", "sim.csv", "--out-dir", "o", "--image", "2", "--scheme", "abnormal", "--k", "3", "--grid", "8", "6"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("pi = ("));
    let grid = fs::read_to_string(dir.path().join("o/fit_image0002_abnormal_k3_grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 8 * 6);
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_pipeline_spec(dir.path());
    let spec = spec.to_str().unwrap();
    let steps: Vec<Vec<&str>> = vec![
        vec!["simulate", "--spec", spec, "--out", "o/sim.csv", "--seed", "4"],
        vec!["ingest", "--input", "o/sim.csv", "--out-dir", "o"],
        vec!["score", "--input", "o/dataset.json", "--out-dir", "o", "--k-max", "3", "--mc-samples", "300"],
        vec!["roc", "--out-dir", "o"],
        vec!["report", "--out-dir", "o"],
        vec!["saccades", "--input", "o/dataset.json", "--out-dir", "o"],
        vec!["duration", "--input", "o/dataset.json", "--out-dir", "o"],
        vec!["fit", "--input", "o/dataset.json", "--out-dir", "o", "--image", "1", "--scheme", "normal", "--k", "2"],
    ];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let _ = fs::remove_dir_all(dir.path().join("o"));
        for s in &steps {
            let o = fixmark(dir.path(), s);
            assert!(o.status.success(), "{s:?}: {}", stderr(&o));
        }
        runs.push(snapshot(&dir.path().join("o")));
    }
    assert!(runs[0].len() > 15);
    assert_eq!(runs[0], runs[1]);
}
