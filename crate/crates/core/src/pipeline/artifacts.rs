use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{read_to_string, PipelineError};
use crate::causal_dml::{CausalForestModel, Decomposition, EffectEstimate, FitMetrics};
use crate::explain::ModerationReport;
use crate::features::{read_features_csv, write_features_csv, NeighborhoodProfile, BUILT_ENV_NAMES};
use crate::scenario::{EffectTable, ScenarioReport};

pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;

pub const INGEST_REPORT: &str = "ingest_report.json";
pub const FEATURES_CSV: &str = "features.csv";
pub const PROFILES_JSON: &str = "profiles.json";
pub const RESIDUALS_JSON: &str = "residuals.json";
pub const MODEL_JSON: &str = "model.json";
pub const EFFECTS_CSV: &str = "effects.csv";
pub const EFFECTS_JSON: &str = "effects.json";
pub const METRICS_JSON: &str = "metrics.json";
pub const DECOMPOSITION_JSON: &str = "decomposition.json";
pub const MODERATION_JSON: &str = "moderation.json";
pub const SCENARIO_REPORT_JSON: &str = "scenario_report.json";
pub const SCENARIOS_GEOJSON: &str = "scenarios.geojson";
pub const RUN_SUMMARY_JSON: &str = "run_summary.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub n_neighborhoods: usize,
    /// unweighted mean outcome, kg CO₂e per household-day
    pub city_average: f64,
    /// kept in the fit, flagged for readers
    pub low_support: Vec<String>,
    pub seed: u64,
    pub folds: usize,
    pub attribution_share_definition: String,
    #[serde(flatten)]
    pub fit: FitMetrics,
}

pub const ATTRIBUTION_SHARE_DEFINITION: &str =
    "Var(total_effect) / Var(outcome_y) across neighborhoods";

fn artifact_err(path: &Path, reason: impl ToString) -> PipelineError {
    PipelineError::Artifact {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

pub fn write_with<F, E>(path: &Path, f: F) -> Result<(), PipelineError>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<(), E>,
    E: ToString,
{
    let file = File::create(path).map_err(|e| artifact_err(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).map_err(|e| artifact_err(path, e))?;
    w.flush().map_err(|e| artifact_err(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    write_with(path, |w| w.write_all(text.as_bytes()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), PipelineError> {
    write_with(path, |w| serde_json::to_writer_pretty(w, value))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| artifact_err(path, e))
}

pub fn write_features(path: &Path, profiles: &[NeighborhoodProfile]) -> Result<(), PipelineError> {
    write_with(path, |w| write_features_csv(w, profiles))
}

pub fn read_features(path: &Path) -> Result<Vec<NeighborhoodProfile>, PipelineError> {
    let text = read_to_string(path)?;
    read_features_csv(text.as_bytes()).map_err(|e| artifact_err(path, e))
}

pub fn read_model(path: &Path) -> Result<CausalForestModel<f64>, PipelineError> {
    let text = read_to_string(path)?;
    CausalForestModel::from_json(&text).map_err(|e| artifact_err(path, e))
}

/// `neighborhood_id, theta_<feature>…, total_effect, relative_effect`
pub fn write_effects_csv(path: &Path, effects: &[EffectEstimate<f64>]) -> Result<(), PipelineError> {
    write_with(path, |w| -> csv::Result<()> {
        let mut c = csv::Writer::from_writer(w);
        let mut header = vec!["neighborhood_id".to_string()];
        header.extend(BUILT_ENV_NAMES.iter().map(|n| format!("theta_{n}")));
        header.push("total_effect".into());
        header.push("relative_effect".into());
        c.write_record(&header)?;
        for e in effects {
            let mut rec = vec![e.neighborhood_id.clone()];
            rec.extend(e.theta.iter().map(f64::to_string));
            rec.push(e.total_effect.to_string());
            rec.push(e.relative_effect.to_string());
            c.write_record(&rec)?;
        }
        c.flush()?;
        Ok(())
    })
}

/// Everything the HTTP API serves, loaded from an output directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub profiles: Vec<NeighborhoodProfile>,
    pub effects: Vec<EffectEstimate<f64>>,
    pub metrics: MetricsReport,
    pub decomposition: Option<Decomposition>,
    pub scenarios: Option<ScenarioReport>,
    pub moderation: Option<ModerationReport>,
    pub geojson: Option<Value>,
}

impl Artifacts {
    /// Features, effects and metrics are required; the rest are optional.
    pub fn load(dir: &Path) -> Result<Self, PipelineError> {
        let optional = |name: &str| {
            let p = dir.join(name);
            p.exists().then_some(p)
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            profiles: read_features(&dir.join(FEATURES_CSV))?,
            effects: read_json(&dir.join(EFFECTS_JSON))?,
            metrics: read_json(&dir.join(METRICS_JSON))?,
            decomposition: optional(DECOMPOSITION_JSON).map(|p| read_json(&p)).transpose()?,
            scenarios: optional(SCENARIO_REPORT_JSON).map(|p| read_json(&p)).transpose()?,
            moderation: optional(MODERATION_JSON).map(|p| read_json(&p)).transpose()?,
            geojson: optional(SCENARIOS_GEOJSON).map(|p| read_json(&p)).transpose()?,
        })
    }

    pub fn effect_table(&self) -> EffectTable {
        EffectTable::from_estimates(self.metrics.city_average, &self.effects)
    }
}
