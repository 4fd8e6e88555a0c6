use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SCENE: &str = r#"
seed = 5
frames = 16

[intrinsics]
f_u = 600.0
f_v = 600.0
p_u = 319.5
p_v = 239.5
width = 640
height = 480

[surface]
kind = "tilted"
depth = 6.0
pitch_deg = 8.0

[[potholes]]
center = [-0.5, 0.2]
semi_axes = [0.5, 0.35]
depth = 0.04

[[potholes]]
center = [0.9, -0.3]
semi_axes = [0.35, 0.3]
depth = 0.0
class_id = 1

[camera]
velocity = [0.01, 0.0, 0.05]

[noise]
box_jitter_px = 1.5
confidence_std = 0.05
depth_rel_std = 0.01

[output]
motion = "correspondences"
outlier_fraction = 0.1
"#;

fn pothole(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pothole"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("run pothole")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn synth(dir: &Path) -> PathBuf {
    let spec = dir.join("scene.toml");
    std::fs::write(&spec, SCENE).unwrap();
    let out = dir.join("seq");
    let o = pothole(&["synth", "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).is_empty(), "{}", stderr(&o));
    out
}

#[test]
fn synth_estimate_eval_area_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let seq = synth(dir.path());
    let manifest = seq.join("manifest.toml");
    let results = dir.path().join("results.jsonl");
    let report = dir.path().join("report.json");
    let o = pothole(&[
        "estimate",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        results.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).is_empty(), "warnings on synth output: {}", stderr(&o));

    let lines = std::fs::read_to_string(&results).unwrap();
    let recs: Vec<Value> = lines.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(recs.iter().any(|r| r["class_id"] == 1));
    assert!(recs.iter().all(|r| r["format_version"] == 1 && r["area_smoothed_m2"].as_f64().unwrap() >= 0.0));

    let o = pothole(&["eval-area", "--results", results.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rep: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(rep["track_count"], 1);
    assert_eq!(rep["per_track"].as_array().unwrap().len(), 1);
    assert!(rep["mae"].as_f64().unwrap() >= 0.0);
    let live: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(live, rep);
}

#[test]
fn estimate_is_deterministic_and_no_smoothing_passes_raw_through() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path()).join("manifest.toml");
    let m = manifest.to_str().unwrap();
    let a = pothole(&["estimate", "--manifest", m, "--seed", "9"]);
    let b = pothole(&["estimate", "--manifest", m, "--seed", "9", "--parallel"]);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);

    let raw = pothole(&["estimate", "--manifest", m, "--no-smoothing"]);
    for line in stdout(&raw).lines() {
        let r: Value = serde_json::from_str(line).unwrap();
        assert_eq!(r["area_smoothed_m2"], r["area_raw_m2"]);
    }
}

#[test]
fn eval_det_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let gt = synth(dir.path()).join("gt_boxes.jsonl");
    let g = gt.to_str().unwrap();
    let o = pothole(&["eval-det", "--dets", g, "--gt", g, "--iou", "0.7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rep: Value = serde_json::from_str(&stdout(&o)).unwrap();
    for key in ["precision", "recall", "f1", "ap50", "ap50_95"] {
        assert_eq!(rep[key], 1.0, "{key}");
    }
    assert_eq!(rep["fn"], 0);
}

#[test]
fn optimize_and_ablation_report_json() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path()).join("manifest.toml");
    let m = manifest.to_str().unwrap();
    let args = ["optimize", "--manifest", m, "--mode", "combined", "--seed", "4", "--n-iter", "5"];
    let a = pothole(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, pothole(&args).stdout);
    let r: Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(r["history"].as_array().unwrap().len(), 10);
    let best = r["objective"].as_f64().unwrap();
    assert!(r["history"].as_array().unwrap().iter().all(|h| h["objective"].as_f64().unwrap() >= best));

    let o = pothole(&["ablation", "--manifest", m]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let names: Vec<&str> = rows.as_array().unwrap().iter().map(|r| r["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["raw", "confidence_only", "distance_only", "combined"]);
}

#[test]
fn bench_reports_mean_and_p95() {
    let o = pothole(&["bench-mbtp"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.starts_with("mbtp 1920x1080, 5 boxes of 200x200 px, 100 frames: mean "), "{text}");
    assert!(text.contains(" ms/frame, p95 "), "{text}");

    let o = pothole(&["bench-mbtp", "--iters", "3", "--json"]);
    let r: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(r["mean_ms"].as_f64().unwrap() > 0.0 && r["p95_ms"].as_f64().unwrap() > 0.0);
}

#[test]
fn exit_codes_separate_usage_from_data_errors() {
    assert_eq!(pothole(&[]).status.code(), Some(2));
    assert_eq!(pothole(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(pothole(&["eval-det", "--dets", "a", "--gt", "b", "--iou", "1.5"]).status.code(), Some(2));
    assert_eq!(pothole(&["estimate", "--manifest", "m.toml", "--lambda", "-1"]).status.code(), Some(2));

    let o = pothole(&["estimate", "--manifest", "/nonexistent/manifest.toml"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/manifest.toml"));

    let dir = tempfile::tempdir().unwrap();
    let dets = dir.path().join("d.jsonl");
    std::fs::write(
        &dets,
        "{\"frame\":0,\"class_id\":0,\"x\":1,\"y\":1,\"w\":5,\"h\":5,\"confidence\":0.5}\n{\"frame\":0,\"class_id\":0,\"x\":1,\"y\":1,\"w\":5,\"h\":5,\"confidence\":1.7}\n",
    )
    .unwrap();
    let d = dets.to_str().unwrap();
    let o = pothole(&["eval-det", "--dets", d, "--gt", d]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}
