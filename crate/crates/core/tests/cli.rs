use std::fs;
use std::path::Path;

use wgflow::cli::main_with_args;
use wgflow::presets::preset;

fn call(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = main_with_args(std::iter::once("wgflow").chain(args.iter().copied()), &mut out);
    (code, String::from_utf8(out).unwrap())
}

fn short_config(dir: &Path, name: &str, end_time: f64) -> String {
    let mut spec = preset(name).unwrap();
    spec.end_time = end_time;
    spec.output_dir = dir.join("out");
    let path = dir.join("run.toml");
    fs::write(&path, spec.to_toml().unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn list_presets_prints_catalogue() {
    let (code, text) = call(&["list-presets"]);
    assert_eq!(code, 0);
    assert!(text.lines().count() >= 20);
    assert!(text.lines().any(|l| l.starts_with("table1 ")));
}

#[test]
fn run_writes_trace_state_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_config(dir.path(), "barenblatt-m2", 0.05);
    let (code, text) = call(&["run", "--config", &config]);
    assert_eq!(code, 0, "{text}");
    assert!(text.starts_with("status: completed"));
    let out = dir.path().join("out");
    let manifest = fs::read_to_string(out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("status = \"completed\""));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("step,time,total_mass"));
    assert!(trace.lines().count() > 2);
}

#[test]
fn run_of_planar_preset_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_config(dir.path(), "pme2d-offset-gaussian", 0.02);
    let (code, text) = call(&["run", "--config", &config, "--M", "8", "--dt", "0.01", "--epsilon", "0.05"]);
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("steps: 2"));
}

#[test]
fn waiting_time_single_level() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let (code, text) = call(&["waiting-time", "--M", "200", "--out", out]);
    assert_eq!(code, 0, "{text}");
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("cells,dt,t_w,t_w_exact"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[0], 200.0);
    assert!((row[2] - row[3]).abs() < 0.05, "{row:?}");
}

#[test]
fn convergence_without_ladder_is_a_usage_error() {
    let (code, _) = call(&["convergence", "--preset", "barenblatt-m2"]);
    assert_eq!(code, 2);
}

#[test]
fn bad_input_exit_codes() {
    assert_eq!(call(&["run", "--preset", "no-such-preset"]).0, 2);
    assert_eq!(call(&["run"]).0, 2);
    assert_eq!(call(&["frobnicate"]).0, 2);
    assert_eq!(call(&["run", "--config", "/nonexistent/run.toml"]).0, 4);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "end_time = [").unwrap();
    assert_eq!(call(&["run", "--config", path.to_str().unwrap()]).0, 2);
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let config = short_config(dir.path(), "ks2d-m2", 0.05);
    let (code, text) = call(&["run", "--config", &config]);
    assert_eq!(code, 3, "{text}");
    assert!(text.contains("status: failed"));
    assert!(dir.path().join("out/manifest.toml").exists());
}
