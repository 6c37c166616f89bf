use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

mod common;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_urban-dml")).args(args).output().unwrap()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap()
}

fn write_config(dir: &Path, input: &Path, output: &Path) -> String {
    let path = dir.join(format!("{}.json", output.file_name().unwrap().to_str().unwrap()));
    fs::write(&path, common::light_config(input, output).to_string()).unwrap();
    path.display().to_string()
}

const STAGES: [&str; 7] = ["ingest", "features", "fit", "effects", "decompose", "explain", "scenario"];

#[test]
fn synth_then_every_stage_produces_all_artifacts_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let city = dir.path().join("city");
    let out = run(&["synth", "--out", city.to_str().unwrap(), "--neighborhoods", "50", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["neighborhoods"], 50);

    let a = dir.path().join("a");
    let cfg = write_config(dir.path(), &city, &a);
    for stage in STAGES {
        let out = run(&["--config", &cfg, stage]);
        assert!(out.status.success(), "{stage}: {}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice::<Value>(&out.stdout).unwrap();
    }
    for name in [
        "ingest_report.json",
        "features.csv",
        "profiles.json",
        "residuals.json",
        "model.json",
        "effects.csv",
        "effects.json",
        "metrics.json",
        "decomposition.json",
        "moderation.json",
        "shap_combined.csv",
        "shap_density.csv",
        "scenario_report.json",
        "scenarios.geojson",
    ] {
        assert!(a.join(name).exists(), "{name} missing");
    }

    let b = dir.path().join("b");
    let cfg_b = write_config(dir.path(), &city, &b);
    assert!(run(&["--config", &cfg_b, "run"]).status.success());
    assert_eq!(fs::read(a.join("effects.csv")).unwrap(), fs::read(b.join("effects.csv")).unwrap());

    let c = dir.path().join("c");
    let cfg_c = write_config(dir.path(), &city, &c);
    assert!(run(&["--config", &cfg_c, "--seed", "77", "run"]).status.success());
    assert_ne!(fs::read(a.join("effects.csv")).unwrap(), fs::read(c.join("effects.csv")).unwrap());
}

#[test]
fn fit_without_features_exits_two_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(&["--output", out_dir.to_str().unwrap(), "fit"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "missing_input");
    assert!(err["path"].as_str().unwrap().ends_with("features.csv"));
}

#[test]
fn bad_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"folds": "five"}"#).unwrap();
    let out = run(&["--config", cfg.to_str().unwrap(), "ingest"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "config");
    let out = run(&["--config", dir.path().join("absent.json").to_str().unwrap(), "ingest"]);
    assert_eq!(out.status.code(), Some(2));
}
