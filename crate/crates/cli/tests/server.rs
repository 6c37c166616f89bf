use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use urban_dml::pipeline::{run_all, PipelineConfig};
use urban_dml::synth::{generate_city, CitySpec};
use urban_dml_cli::server::{router, AppState};

mod common;

fn pipeline_output(dir: &Path) -> PipelineConfig {
    let input = dir.join("city");
    let spec = CitySpec {
        n_neighborhoods: 60,
        planned_units: 3_000,
        planned_targets: 6,
        seed: 11,
        ..CitySpec::default()
    };
    generate_city(&spec).write(&input).unwrap();
    let cfg: PipelineConfig = serde_json::from_value(common::light_config(&input, &dir.join("out"))).unwrap();
    run_all(&cfg, true).unwrap();
    cfg
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Value, Option<String>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let cors = res
        .headers()
        .get("access-control-allow-origin")
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap(), cors)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).header("origin", "http://ui.local").body(Body::empty()).unwrap()
}

fn post(body: &str) -> Request<Body> {
    Request::post("/api/scenarios/evaluate")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap()
}

#[tokio::test]
async fn endpoints_serve_the_pipeline_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = pipeline_output(dir.path());
    let app = router(AppState::load(&cfg.output_dir), None);

    for uri in ["/api/neighborhoods", "/api/metrics", "/api/scenarios/presets", "/api/moderation", "/api/health"] {
        let (status, body, cors) = call(&app, get(uri)).await;
        assert_eq!(status, StatusCode::OK, "{uri}");
        assert_eq!(body["schema_version"], 1, "{uri}");
        assert_eq!(cors.as_deref(), Some("*"), "{uri}");
    }

    let (_, metrics, _) = call(&app, get("/api/metrics")).await;
    for key in ["r2_combined", "nuisance_r2_y", "nuisance_r2_t", "attribution_share"] {
        assert!(metrics[key].is_number(), "{key}");
    }
    let (_, hoods, _) = call(&app, get("/api/neighborhoods")).await;
    let first = &hoods["neighborhoods"][0];
    assert!(first["geometry"]["type"].is_string());
    assert!(first["effect"]["total_effect"].is_number());
    assert!(first["profile"]["treatment"].is_array());

    let (_, presets, _) = call(&app, get("/api/scenarios/presets")).await;
    let optimum = presets["scenarios"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["name"] == "Optimum")
        .unwrap()
        .clone();
    let allocations: serde_json::Map<String, Value> = optimum["contributions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["neighborhood_id"].as_str().unwrap().to_string(), c["units"].clone()))
        .collect();
    let cli_report: Value =
        serde_json::from_str(&std::fs::read_to_string(cfg.output("scenario_report.json")).unwrap()).unwrap();
    let cli_relative = cli_report["scenarios"]
        .as_array()
        .unwrap()
        .iter()
        .find(|s| s["name"] == "Optimum")
        .unwrap()["relative_to_average"]
        .as_f64()
        .unwrap();
    for body in [
        json!({"name": "Optimum", "allocations": allocations}),
        Value::Object(allocations.clone()),
    ] {
        let (status, res, _) = call(&app, post(&body.to_string())).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(res["schema_version"], 1);
        assert!((res["relative_to_average"].as_f64().unwrap() - cli_relative).abs() <= 1e-12);
        assert_eq!(res["total_units"], 3_000);
    }
}

#[tokio::test]
async fn evaluate_rejects_bad_requests() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = pipeline_output(dir.path());
    let app = router(AppState::load(&cfg.output_dir), None);

    let (status, body, _) = call(&app, post(r#"{"allocations": {"nowhere": 5, "elsewhere": 1}}"#)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["ids"], json!(["elsewhere", "nowhere"]));
    assert!(body["message"].as_str().unwrap().contains("nowhere"));

    for bad in [r#"{"allocations": {"a": -1}}"#, "not json", r#"{"allocations": 3}"#] {
        let (status, body, _) = call(&app, post(bad)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
        assert_eq!(body["error"], "bad_request");
    }
    let id = cfg_first_id(&app).await;
    let (status, body, _) = call(&app, post(&json!({id: 0}).to_string())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "invalid_scenario");
}

async fn cfg_first_id(app: &Router) -> String {
    let (_, hoods, _) = call(app, get("/api/neighborhoods")).await;
    hoods["neighborhoods"][0]["neighborhood_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn concurrent_evaluations_are_independent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = pipeline_output(dir.path());
    let app = router(AppState::load(&cfg.output_dir), None);
    let (_, hoods, _) = call(&app, get("/api/neighborhoods")).await;
    let ids: Vec<String> = hoods["neighborhoods"]
        .as_array()
        .unwrap()
        .iter()
        .map(|h| h["neighborhood_id"].as_str().unwrap().to_string())
        .collect();
    let single = |i: usize| json!({"allocations": {ids[i % ids.len()].clone(): 10 + i}}).to_string();
    let mut expected = Vec::new();
    for i in 0..16 {
        expected.push(call(&app, post(&single(i))).await.1);
    }
    let handles: Vec<_> = (0..16)
        .map(|i| {
            let app = app.clone();
            let body = single(i);
            tokio::spawn(async move { call(&app, post(&body)).await.1 })
        })
        .collect();
    for (i, h) in handles.into_iter().enumerate() {
        assert_eq!(h.await.unwrap(), expected[i]);
    }
}

#[tokio::test]
async fn missing_artifacts_answer_409() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::load(dir.path()), None);
    for uri in ["/api/neighborhoods", "/api/metrics", "/api/scenarios/presets", "/api/moderation"] {
        let (status, body, _) = call(&app, get(uri)).await;
        assert_eq!(status, StatusCode::CONFLICT, "{uri}");
        assert_eq!(body["error"], "artifacts_missing");
    }
    let (status, _, _) = call(&app, post(r#"{"a": 1}"#)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, body, _) = call(&app, get("/api/health")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["ready"], false);
}
