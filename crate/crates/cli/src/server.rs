//! Read-only JSON API over a completed pipeline output directory.
//!
//! State is loaded once and never mutated; every handler is a pure function
//! of the request and that state.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;
use tower_http::services::ServeDir;
use urban_dml::pipeline::{Artifacts, PipelineConfig, PipelineError, ARTIFACT_SCHEMA_VERSION};
use urban_dml::scenario::{evaluate_scenario, EffectTable, Scenario, ScenarioError, ScenarioResult};

pub struct Loaded {
    pub artifacts: Artifacts,
    pub table: EffectTable,
    neighborhoods: Value,
}

/// Loaded artifacts, or the reason they could not be loaded.
pub struct AppState {
    pub loaded: Result<Loaded, String>,
}

impl AppState {
    pub fn load(dir: &Path) -> Self {
        let loaded = Artifacts::load(dir).map(Loaded::new).map_err(|e| e.to_string());
        Self { loaded }
    }

    fn ready(&self) -> Result<&Loaded, ApiError> {
        self.loaded.as_ref().map_err(|reason| ApiError {
            status: StatusCode::CONFLICT,
            body: json!({"error": "artifacts_missing", "message": reason}),
        })
    }
}

impl Loaded {
    fn new(artifacts: Artifacts) -> Self {
        let table = artifacts.effect_table();
        let geometry: HashMap<String, Value> = artifacts
            .geojson
            .as_ref()
            .and_then(|g| g["features"].as_array())
            .map(|fs| {
                fs.iter()
                    .filter_map(|f| {
                        let id = f["properties"]["neighborhood_id"].as_str()?;
                        Some((id.to_string(), f["geometry"].clone()))
                    })
                    .collect()
            })
            .unwrap_or_default();
        let effects: HashMap<&str, _> = artifacts
            .effects
            .iter()
            .map(|e| (e.neighborhood_id.as_str(), e))
            .collect();
        let rows: Vec<Value> = artifacts
            .profiles
            .iter()
            .map(|p| {
                json!({
                    "neighborhood_id": p.neighborhood_id,
                    "profile": p,
                    "effect": effects.get(p.neighborhood_id.as_str()),
                    "geometry": geometry.get(&p.neighborhood_id),
                })
            })
            .collect();
        let neighborhoods = json!({
            "schema_version": ARTIFACT_SCHEMA_VERSION,
            "city_average": table.city_average,
            "neighborhoods": rows,
        });
        Self {
            artifacts,
            table,
            neighborhoods,
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: Value,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = self.body;
        body["schema_version"] = json!(ARTIFACT_SCHEMA_VERSION);
        (self.status, Json(body)).into_response()
    }
}

impl From<ScenarioError> for ApiError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::UnknownNeighborhood(ids) => ApiError {
                status: StatusCode::NOT_FOUND,
                body: json!({
                    "error": "unknown_neighborhood",
                    "message": format!("unknown neighborhoods: {}", ids.join(", ")),
                    "ids": ids,
                }),
            },
            other => ApiError {
                status: StatusCode::BAD_REQUEST,
                body: json!({"error": "invalid_scenario", "message": other.to_string()}),
            },
        }
    }
}

/// Body of an evaluate request: `{"name": …, "allocations": {…}}` or the
/// bare allocation map.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedRequest {
    #[serde(default = "custom_name")]
    name: String,
    allocations: BTreeMap<String, u64>,
}

fn custom_name() -> String {
    "Custom".into()
}

pub fn parse_evaluate_request(body: Value) -> Result<Scenario, String> {
    let named = body.as_object().is_some_and(|o| o.contains_key("allocations"));
    if named {
        let r: NamedRequest = serde_json::from_value(body).map_err(|e| e.to_string())?;
        Ok(Scenario::new(r.name, r.allocations))
    } else {
        let allocations: BTreeMap<String, u64> = serde_json::from_value(body).map_err(|e| e.to_string())?;
        Ok(Scenario::new(custom_name(), allocations))
    }
}

#[derive(Debug, Serialize)]
struct Versioned<T> {
    schema_version: u32,
    #[serde(flatten)]
    inner: T,
}

fn versioned<T: Serialize>(inner: T) -> Json<Versioned<T>> {
    Json(Versioned {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        inner,
    })
}

type Shared = Arc<AppState>;

async fn neighborhoods(State(s): State<Shared>) -> Result<Json<Value>, ApiError> {
    Ok(Json(s.ready()?.neighborhoods.clone()))
}

async fn metrics(State(s): State<Shared>) -> Result<Json<Value>, ApiError> {
    let l = s.ready()?;
    let mut v = serde_json::to_value(&l.artifacts.metrics).unwrap_or_default();
    v["decomposition"] = json!(l.artifacts.decomposition);
    Ok(Json(v))
}

fn missing(name: &str) -> ApiError {
    ApiError {
        status: StatusCode::CONFLICT,
        body: json!({"error": "artifacts_missing", "message": format!("{name} has not been produced")}),
    }
}

async fn presets(State(s): State<Shared>) -> Result<Json<Value>, ApiError> {
    let report = s.ready()?.artifacts.scenarios.as_ref().ok_or_else(|| missing("scenario_report.json"))?;
    Ok(Json(serde_json::to_value(report).unwrap_or_default()))
}

async fn moderation(State(s): State<Shared>) -> Result<Json<Value>, ApiError> {
    let report = s.ready()?.artifacts.moderation.as_ref().ok_or_else(|| missing("moderation.json"))?;
    Ok(Json(serde_json::to_value(versioned(report).0).unwrap_or_default()))
}

async fn evaluate(
    State(s): State<Shared>,
    body: Result<Json<Value>, JsonRejection>,
) -> Result<Json<Versioned<ScenarioResult>>, ApiError> {
    let l = s.ready()?;
    let bad = |message: String| ApiError {
        status: StatusCode::BAD_REQUEST,
        body: json!({"error": "bad_request", "message": message}),
    };
    let Json(body) = body.map_err(|e| bad(e.body_text()))?;
    let scenario = parse_evaluate_request(body).map_err(bad)?;
    Ok(versioned(evaluate_scenario(&scenario, &l.table)?))
}

async fn health(State(s): State<Shared>) -> Json<Value> {
    Json(json!({"schema_version": ARTIFACT_SCHEMA_VERSION, "ready": s.loaded.is_ok()}))
}

pub fn router(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/neighborhoods", get(neighborhoods))
        .route("/api/metrics", get(metrics))
        .route("/api/scenarios/presets", get(presets))
        .route("/api/scenarios/evaluate", post(evaluate))
        .route("/api/moderation", get(moderation))
        .with_state(Arc::new(state));
    let app = match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    app.layer(CorsLayer::permissive())
}

/// Blocks until Ctrl-C.
pub fn serve(cfg: &PipelineConfig, addr: SocketAddr, static_dir: Option<PathBuf>) -> Result<(), PipelineError> {
    let state = AppState::load(&cfg.output_dir);
    if let Err(reason) = &state.loaded {
        eprintln!("{}", json!({"warning": "artifacts_missing", "message": reason}));
    }
    let app = router(state, static_dir);
    let io = |e: std::io::Error| PipelineError::Config(format!("cannot serve on {addr}: {e}"));
    let rt = tokio::runtime::Runtime::new().map_err(io)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        eprintln!("{}", json!({"listening": addr.to_string()}));
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })
    .map_err(io)
}
