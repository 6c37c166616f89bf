//! File-to-file pipeline driver shared by the command line and the server.
//!
//! Every stage reads its inputs from the configured input directory or from
//! artifacts of earlier stages in the output directory, and writes its own
//! artifacts there. Stages are deterministic given the config.

mod artifacts;
mod stages;

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::boosted_trees::GbtParams;
use crate::causal_dml::{CausalForestParams, DmlError};
use crate::emissions::EmissionsError;
use crate::explain::ExplainError;
use crate::features::{FeatureError, GravityParams};
use crate::ingest::{GtfsError, IngestError};
use crate::scenario::{PresetParams, ScenarioError};

pub use artifacts::*;
pub use stages::*;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Input file names, relative to the input directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputFiles {
    pub neighborhoods: PathBuf,
    pub households: PathBuf,
    pub trips: PathBuf,
    pub pois: PathBuf,
    pub gtfs: PathBuf,
    /// optional from here on: skipped when the file does not exist
    pub elections: PathBuf,
    pub planned_units: PathBuf,
    pub scenarios: PathBuf,
    pub emission_factors: PathBuf,
}

impl Default for InputFiles {
    fn default() -> Self {
        Self {
            neighborhoods: "neighborhoods.geojson".into(),
            households: "households.csv".into(),
            trips: "trips.csv".into(),
            pois: "pois.csv".into(),
            gtfs: "gtfs".into(),
            elections: "elections.csv".into(),
            planned_units: "planned_units.csv".into(),
            scenarios: "scenarios.json".into(),
            emission_factors: "emission_factors.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub input_dir: PathBuf,
    pub output_dir: PathBuf,
    pub files: InputFiles,
    pub seed: u64,
    pub folds: usize,
    pub service_date: Option<NaiveDate>,
    pub nuisance: GbtParams,
    pub forest: CausalForestParams,
    pub gravity: GravityParams,
    pub min_households: usize,
    pub weighted: bool,
    pub presets: PresetParams,
    pub moderation_runs: usize,
    pub min_abs_rho: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            input_dir: "data/demo_city".into(),
            output_dir: "out".into(),
            files: InputFiles::default(),
            seed: 42,
            folds: 5,
            service_date: None,
            nuisance: GbtParams::default(),
            forest: CausalForestParams::default(),
            gravity: GravityParams::default(),
            min_households: 10,
            weighted: true,
            presets: PresetParams::default(),
            moderation_runs: 10,
            min_abs_rho: 0.2,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(s: &str) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| PipelineError::Config(e.to_string()))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(PipelineError::Config(format!(
                "unsupported config schema_version {}",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn input(&self, name: &Path) -> PathBuf {
        if name.is_absolute() {
            name.to_path_buf()
        } else {
            self.input_dir.join(name)
        }
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    fn optional_input(&self, name: &Path) -> Option<PathBuf> {
        let p = self.input(name);
        p.exists().then_some(p)
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("missing input `{}`", path.display())]
    MissingInput { path: PathBuf },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("{}: {source}", path.display())]
    Gtfs { path: PathBuf, source: GtfsError },
    #[error(transparent)]
    Emissions(#[from] EmissionsError),
    #[error(transparent)]
    Features(#[from] FeatureError),
    #[error(transparent)]
    Dml(#[from] DmlError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{}: {reason}", path.display())]
    Artifact { path: PathBuf, reason: String },
    #[error("invalid config: {0}")]
    Config(String),
}

impl PipelineError {
    /// 2 for missing inputs and bad configuration, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::MissingInput { .. } | PipelineError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::MissingInput { .. } => "missing_input",
            PipelineError::Ingest(_) => "ingest",
            PipelineError::Gtfs { .. } => "gtfs",
            PipelineError::Emissions(_) => "emissions",
            PipelineError::Features(_) => "features",
            PipelineError::Dml(_) => "dml",
            PipelineError::Explain(_) => "explain",
            PipelineError::Scenario(_) => "scenario",
            PipelineError::Artifact { .. } => "artifact",
            PipelineError::Config(_) => "config",
        }
    }

    pub fn path(&self) -> Option<&Path> {
        match self {
            PipelineError::MissingInput { path }
            | PipelineError::Gtfs { path, .. }
            | PipelineError::Artifact { path, .. } => Some(path),
            PipelineError::Ingest(e) => Some(e.path()),
            _ => None,
        }
    }

    /// Machine-readable form for stderr and HTTP bodies.
    pub fn to_json(&self) -> Value {
        let mut v = json!({"error": self.kind(), "message": self.to_string()});
        if let Some(p) = self.path() {
            v["path"] = json!(p.display().to_string());
        }
        if let PipelineError::Ingest(IngestError::Rows { errors, .. }) = self {
            v["rows"] = json!(errors.iter().take(50).collect::<Vec<_>>());
        }
        v
    }
}

pub(crate) fn read_to_string(path: &Path) -> Result<String, PipelineError> {
    std::fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => PipelineError::MissingInput { path: path.to_path_buf() },
        _ => PipelineError::Artifact {
            path: path.to_path_buf(),
            reason: e.to_string(),
        },
    })
}

pub(crate) fn require(path: PathBuf) -> Result<PathBuf, PipelineError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(PipelineError::MissingInput { path })
    }
}
