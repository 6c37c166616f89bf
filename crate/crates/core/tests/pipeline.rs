use std::fs;
use std::path::Path;

use urban_dml::boosted_trees::GbtParams;
use urban_dml::causal_dml::CausalForestParams;
use urban_dml::pipeline::*;
use urban_dml::scenario::PresetParams;
use urban_dml::synth::{generate_city, CitySpec};

fn city(dir: &Path, n: usize) {
    let spec = CitySpec {
        n_neighborhoods: n,
        planned_units: 6_000,
        planned_targets: 8,
        seed: 11,
        ..CitySpec::default()
    };
    generate_city(&spec).write(dir).unwrap();
}

fn light_config(input: &Path, output: &Path) -> PipelineConfig {
    PipelineConfig {
        input_dir: input.to_path_buf(),
        output_dir: output.to_path_buf(),
        seed: 5,
        folds: 3,
        nuisance: GbtParams {
            n_trees: 40,
            max_depth: 3,
            learning_rate: 0.2,
            ..GbtParams::default()
        },
        forest: CausalForestParams {
            n_trees: 20,
            ..CausalForestParams::default()
        },
        presets: PresetParams {
            optimum_k: 5,
            ..PresetParams::default()
        },
        moderation_runs: 2,
        ..PipelineConfig::default()
    }
}

#[test]
fn full_run_writes_consistent_artifacts_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("city");
    city(&input, 60);
    let a = light_config(&input, &dir.path().join("a"));
    let summary = run_all(&a, true).unwrap();
    assert!(summary.n_neighborhoods > 40);

    let art = Artifacts::load(&a.output_dir).unwrap();
    assert_eq!(art.effects.len(), art.profiles.len());
    assert_eq!(art.metrics.n_neighborhoods, art.profiles.len());
    let d = art.decomposition.as_ref().unwrap();
    let total: f64 = d.groups.iter().map(|g| g.percent).sum();
    assert!((total - 100.0).abs() < 1e-9);

    let report = art.scenarios.as_ref().unwrap();
    let names: Vec<&str> = report.scenarios.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["Planned", "TOD_rail", "Ringbahn", "Optimum"]);
    assert!(report.scenarios.iter().all(|s| s.total_units == 6_000));
    let geo = art.geojson.as_ref().unwrap();
    assert_eq!(geo["features"].as_array().unwrap().len(), 60);

    let moderation = art.moderation.as_ref().unwrap();
    assert_eq!(moderation.n_runs, 2);
    assert_eq!(moderation.scopes.len(), 6);
    for scope in shap_scopes() {
        assert!(a.output(&shap_file_name(&scope.name)).exists());
    }

    let b = light_config(&input, &dir.path().join("b"));
    run_all(&b, false).unwrap();
    for name in [FEATURES_CSV, MODEL_JSON, EFFECTS_JSON, METRICS_JSON, SCENARIO_REPORT_JSON] {
        assert_eq!(
            fs::read(a.output(name)).unwrap(),
            fs::read(b.output(name)).unwrap(),
            "{name} differs between runs"
        );
    }
}

#[test]
fn missing_inputs_and_artifacts_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = light_config(&dir.path().join("nothing"), &dir.path().join("out"));
    let err = run_features(&cfg).unwrap_err();
    assert!(matches!(err, PipelineError::MissingInput { .. }));
    assert_eq!(err.exit_code(), 2);
    assert_eq!(err.to_json()["error"], "missing_input");

    let err = run_fit(&cfg).unwrap_err();
    assert!(matches!(&err, PipelineError::MissingInput { path } if path.ends_with(FEATURES_CSV)));
}

#[test]
fn invalid_rows_are_reported_with_their_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("city");
    city(&input, 20);
    let trips = input.join("trips.csv");
    let mut text = fs::read_to_string(&trips).unwrap();
    let mode = text.lines().next().unwrap().split(',').position(|c| c == "mode").unwrap();
    let mut cols: Vec<String> = text.lines().nth(1).unwrap().split(',').map(str::to_string).collect();
    cols[mode] = "hovercraft".into();
    text.push_str(&cols.join(","));
    text.push('\n');
    fs::write(&trips, text).unwrap();

    let err = run_ingest(&light_config(&input, &dir.path().join("out"))).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    let j = err.to_json();
    assert_eq!(j["error"], "ingest");
    assert!(j["path"].as_str().unwrap().ends_with("trips.csv"));
    assert_eq!(j["rows"][0]["kind"], "unknown_mode");
}

#[test]
fn config_round_trips_and_rejects_unknown_versions() {
    let cfg = PipelineConfig::default();
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(PipelineConfig::from_json(&text).unwrap(), cfg);
    let partial = PipelineConfig::from_json(r#"{"seed": 9, "folds": 4}"#).unwrap();
    assert_eq!((partial.seed, partial.folds), (9, 4));
    assert_eq!(partial.nuisance, GbtParams::default());
    let err = PipelineConfig::from_json(r#"{"schema_version": 7}"#).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}
