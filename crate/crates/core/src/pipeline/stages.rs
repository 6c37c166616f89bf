use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::artifacts::*;
use super::{require, PipelineConfig, PipelineError};
use crate::causal_dml::{
    crossfit_residualize, decompose_effect, estimate_effects, fit_causal_forest, fit_metrics, CausalForestModel,
    CausalForestParams, CrossfitParams, Decomposition, EffectEstimate, ResidualizedData, FIVE_D_GROUPS,
};
use crate::emissions::EmissionFactorTable;
use crate::explain::{moderation_analysis, shap_matrix, write_shap_csv, ModerationParams, ModerationReport, Scope};
use crate::features::{
    build_profiles, confounder_matrix, treatment_matrix, FeatureInputs, FeatureOptions, FeatureSet,
    NeighborhoodProfile, BUILT_ENV_NAMES, CONFOUNDER_NAMES,
};
use crate::ingest::{
    parse_elections, parse_gtfs, parse_households, parse_neighborhoods, parse_planned_units, parse_pois,
    parse_trips, BoundingBox, ElectionRecord, GtfsBundle, GtfsOptions, HouseholdRecord, NeighborhoodRaw,
    PlannedUnits, PoiRecord, TripRecord,
};
use crate::rng::derive_seed;
use crate::scenario::{run_scenarios, to_geojson, EffectTable, Scenario, ScenarioFile, ScenarioReport};

/// Degrees added around the neighborhood centroids when filtering POIs.
pub const POI_MARGIN_DEG: f64 = 0.05;

/// Every parsed input file.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub neighborhoods: Vec<NeighborhoodRaw>,
    pub households: Vec<HouseholdRecord>,
    pub trips: Vec<TripRecord>,
    pub pois: Vec<PoiRecord>,
    pub gtfs: GtfsBundle,
    pub elections: Vec<ElectionRecord>,
    pub planned: Vec<PlannedUnits>,
    pub factors: EmissionFactorTable<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileCount {
    pub file: String,
    pub records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub schema_version: u32,
    pub service_date: NaiveDate,
    pub files: Vec<FileCount>,
    pub gtfs_stops: usize,
    pub gtfs_departures: usize,
    pub custom_emission_factors: bool,
}

pub fn load_inputs(cfg: &PipelineConfig) -> Result<(Inputs, IngestReport), PipelineError> {
    let f = &cfg.files;
    let mut files = Vec::new();
    let mut count = |path: &Path, n: usize| {
        files.push(FileCount {
            file: path.display().to_string(),
            records: n,
        })
    };

    let p = require(cfg.input(&f.neighborhoods))?;
    let neighborhoods = parse_neighborhoods(&p)?.into_result(&p)?;
    count(&p, neighborhoods.len());
    let p = require(cfg.input(&f.households))?;
    let households = parse_households(&p)?.into_result(&p)?;
    count(&p, households.len());
    let p = require(cfg.input(&f.trips))?;
    let trips = parse_trips(&p)?.into_result(&p)?;
    count(&p, trips.len());
    let p = require(cfg.input(&f.pois))?;
    let bbox = BoundingBox::around(neighborhoods.iter().map(|n| n.centroid), POI_MARGIN_DEG);
    let pois = parse_pois(&p, bbox.as_ref())?.into_result(&p)?;
    count(&p, pois.len());

    let elections = match cfg.optional_input(&f.elections) {
        Some(p) => {
            let r = parse_elections(&p)?.into_result(&p)?;
            count(&p, r.len());
            r
        }
        None => Vec::new(),
    };
    let planned = match cfg.optional_input(&f.planned_units) {
        Some(p) => {
            let r = parse_planned_units(&p)?.into_result(&p)?;
            count(&p, r.len());
            r
        }
        None => Vec::new(),
    };
    let factor_path = cfg.optional_input(&f.emission_factors);
    let factors = EmissionFactorTable::load(factor_path.as_deref())?;

    let gtfs_dir = require(cfg.input(&f.gtfs))?;
    let gtfs = parse_gtfs(
        &gtfs_dir,
        &GtfsOptions {
            service_date: cfg.service_date,
        },
    )
    .map_err(|source| PipelineError::Gtfs {
        path: gtfs_dir.clone(),
        source,
    })?;

    let report = IngestReport {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        service_date: gtfs.service_date,
        files,
        gtfs_stops: gtfs.stops.len(),
        gtfs_departures: gtfs.departures.len(),
        custom_emission_factors: factor_path.is_some(),
    };
    Ok((
        Inputs {
            neighborhoods,
            households,
            trips,
            pois,
            gtfs,
            elections,
            planned,
            factors,
        },
        report,
    ))
}

fn prepare_output(cfg: &PipelineConfig) -> Result<(), PipelineError> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| PipelineError::Artifact {
        path: cfg.output_dir.clone(),
        reason: e.to_string(),
    })
}

/// Parses and validates every input; writes `ingest_report.json`.
pub fn run_ingest(cfg: &PipelineConfig) -> Result<IngestReport, PipelineError> {
    let (_, report) = load_inputs(cfg)?;
    prepare_output(cfg)?;
    write_json(&cfg.output(INGEST_REPORT), &report)?;
    Ok(report)
}

/// Builds neighborhood profiles; writes `features.csv` and `profiles.json`.
pub fn run_features(cfg: &PipelineConfig) -> Result<FeatureSet, PipelineError> {
    let (inputs, report) = load_inputs(cfg)?;
    let set = build_profiles(
        &FeatureInputs {
            neighborhoods: &inputs.neighborhoods,
            households: &inputs.households,
            trips: &inputs.trips,
            pois: &inputs.pois,
            gtfs: &inputs.gtfs,
            elections: &inputs.elections,
            factors: &inputs.factors,
        },
        &FeatureOptions {
            weighted: cfg.weighted,
            min_households: cfg.min_households,
            gravity: cfg.gravity,
        },
    )?;
    prepare_output(cfg)?;
    write_json(&cfg.output(INGEST_REPORT), &report)?;
    write_features(&cfg.output(FEATURES_CSV), &set.profiles)?;
    write_json(&cfg.output(PROFILES_JSON), &set)?;
    Ok(set)
}

pub fn crossfit_params(cfg: &PipelineConfig) -> CrossfitParams {
    CrossfitParams {
        folds: cfg.folds,
        seed: derive_seed(cfg.seed, 1),
        gbt: cfg.nuisance.clone(),
        ..CrossfitParams::default()
    }
}

pub fn forest_params(cfg: &PipelineConfig) -> CausalForestParams {
    CausalForestParams {
        seed: derive_seed(cfg.seed, 2),
        ..cfg.forest.clone()
    }
}

/// Unweighted mean outcome over neighborhoods.
pub fn city_average(profiles: &[NeighborhoodProfile]) -> f64 {
    profiles.iter().map(|p| p.outcome_y).sum::<f64>() / profiles.len().max(1) as f64
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub model: CausalForestModel<f64>,
    pub residuals: ResidualizedData<f64>,
}

/// Cross-fitted residualization and the causal forest; reads `features.csv`,
/// writes `residuals.json` and `model.json`.
pub fn run_fit(cfg: &PipelineConfig) -> Result<FitOutput, PipelineError> {
    let profiles = read_features(&cfg.output(FEATURES_CSV))?;
    let out = fit_profiles(cfg, &profiles)?;
    write_json(&cfg.output(RESIDUALS_JSON), &out.residuals)?;
    write_text(&cfg.output(MODEL_JSON), &out.model.to_json())?;
    Ok(out)
}

pub fn fit_profiles(cfg: &PipelineConfig, profiles: &[NeighborhoodProfile]) -> Result<FitOutput, PipelineError> {
    let x = confounder_matrix(profiles);
    let t = treatment_matrix(profiles);
    let y: Vec<f64> = profiles.iter().map(|p| p.outcome_y).collect();
    let residuals = crossfit_residualize(x.view(), &y, t.view(), &crossfit_params(cfg))?;
    let model = fit_causal_forest(x.view(), &residuals, &forest_params(cfg))?;
    Ok(FitOutput { model, residuals })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectsOutput {
    pub effects: Vec<EffectEstimate<f64>>,
    pub metrics: MetricsReport,
}

/// Per-neighborhood θ and total effects; writes `effects.csv`,
/// `effects.json` and `metrics.json`.
pub fn run_effects(cfg: &PipelineConfig) -> Result<EffectsOutput, PipelineError> {
    let profiles = read_features(&cfg.output(FEATURES_CSV))?;
    let model = read_model(&cfg.output(MODEL_JSON))?;
    let residuals: ResidualizedData<f64> = read_json(&cfg.output(RESIDUALS_JSON))?;
    let out = effects_from(cfg, &profiles, &model, &residuals)?;
    write_effects_csv(&cfg.output(EFFECTS_CSV), &out.effects)?;
    write_json(&cfg.output(EFFECTS_JSON), &out.effects)?;
    write_json(&cfg.output(METRICS_JSON), &out.metrics)?;
    Ok(out)
}

pub fn effects_from(
    cfg: &PipelineConfig,
    profiles: &[NeighborhoodProfile],
    model: &CausalForestModel<f64>,
    residuals: &ResidualizedData<f64>,
) -> Result<EffectsOutput, PipelineError> {
    let x = confounder_matrix(profiles);
    let t = treatment_matrix(profiles);
    let y: Vec<f64> = profiles.iter().map(|p| p.outcome_y).collect();
    let ids: Vec<String> = profiles.iter().map(|p| p.neighborhood_id.clone()).collect();
    let ybar = city_average(profiles);
    let effects = estimate_effects(model, &ids, x.view(), t.view(), ybar)?;
    let fit = fit_metrics(&y, x.view(), &effects, residuals, model)?;
    let metrics = MetricsReport {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        n_neighborhoods: profiles.len(),
        city_average: ybar,
        low_support: profiles
            .iter()
            .filter(|p| p.low_support)
            .map(|p| p.neighborhood_id.clone())
            .collect(),
        seed: cfg.seed,
        folds: cfg.folds,
        attribution_share_definition: ATTRIBUTION_SHARE_DEFINITION.into(),
        fit,
    };
    Ok(EffectsOutput { effects, metrics })
}

/// Shares of each feature and 5D group; writes `decomposition.json`.
pub fn run_decompose(cfg: &PipelineConfig) -> Result<Decomposition, PipelineError> {
    let effects: Vec<EffectEstimate<f64>> = read_json(&cfg.output(EFFECTS_JSON))?;
    let d = decompose_effect(&effects, &BUILT_ENV_NAMES, &FIVE_D_GROUPS)?;
    write_json(&cfg.output(DECOMPOSITION_JSON), &d)?;
    Ok(d)
}

pub fn shap_scopes() -> Vec<Scope> {
    Scope::combined_and_groups(BUILT_ENV_NAMES.len(), &FIVE_D_GROUPS)
}

pub fn shap_file_name(scope: &str) -> String {
    format!("shap_{scope}.csv")
}

/// SHAP tables of the fitted model for every scope, then the repeated-fit
/// moderation check; writes `shap_<scope>.csv` and `moderation.json`.
pub fn run_explain(cfg: &PipelineConfig) -> Result<ModerationReport, PipelineError> {
    let profiles = read_features(&cfg.output(FEATURES_CSV))?;
    let model = read_model(&cfg.output(MODEL_JSON))?;
    let x = confounder_matrix(&profiles);
    let t = treatment_matrix(&profiles);
    let y: Vec<f64> = profiles.iter().map(|p| p.outcome_y).collect();
    let ids: Vec<String> = profiles.iter().map(|p| p.neighborhood_id.clone()).collect();
    let scopes = shap_scopes();
    for scope in &scopes {
        let shap = shap_matrix(&model, x.view(), scope);
        let path = cfg.output(&shap_file_name(&scope.name));
        write_with(&path, |w| write_shap_csv(w, &shap, x.view(), &ids, &CONFOUNDER_NAMES))?;
    }
    let report = moderation_analysis(
        x.view(),
        &y,
        t.view(),
        &CONFOUNDER_NAMES,
        &scopes,
        &crossfit_params(cfg),
        &cfg.forest,
        &ModerationParams {
            n_runs: cfg.moderation_runs,
            master_seed: cfg.seed,
            min_abs_rho: cfg.min_abs_rho,
        },
    )?;
    write_json(&cfg.output(MODERATION_JSON), &report)?;
    Ok(report)
}

/// The scenario document: `scenarios.json` if present, with the plan from
/// `planned_units.csv` added when the document has none.
pub fn scenario_file(cfg: &PipelineConfig) -> Result<ScenarioFile, PipelineError> {
    let mut file = match cfg.optional_input(&cfg.files.scenarios) {
        Some(p) => ScenarioFile::from_json(&super::read_to_string(&p)?)?,
        None => ScenarioFile::from_json("{}")?,
    };
    if file.planned().is_none() {
        if let Some(p) = cfg.optional_input(&cfg.files.planned_units) {
            let planned = parse_planned_units(&p)?.into_result(&p)?;
            let mut alloc = BTreeMap::new();
            for u in planned {
                *alloc.entry(u.neighborhood_id).or_insert(0) += u.units;
            }
            file.scenarios.insert(0, Scenario::new("Planned", alloc));
        }
    }
    Ok(file)
}

pub fn effect_table(profiles: &[NeighborhoodProfile], effects: &[EffectEstimate<f64>]) -> EffectTable {
    EffectTable::from_estimates(city_average(profiles), effects)
}

/// Presets and custom scenarios; writes `scenario_report.json` and
/// `scenarios.geojson`.
pub fn run_scenario(cfg: &PipelineConfig) -> Result<ScenarioReport, PipelineError> {
    let profiles = read_features(&cfg.output(FEATURES_CSV))?;
    let effects: Vec<EffectEstimate<f64>> = read_json(&cfg.output(EFFECTS_JSON))?;
    let table = effect_table(&profiles, &effects);
    let report = run_scenarios(&scenario_file(cfg)?, &profiles, &table, &cfg.presets)?;
    write_json(&cfg.output(SCENARIO_REPORT_JSON), &report)?;

    let p = require(cfg.input(&cfg.files.neighborhoods))?;
    let hoods = parse_neighborhoods(&p)?.into_result(&p)?;
    let relative: BTreeMap<String, f64> = effects
        .iter()
        .map(|e| (e.neighborhood_id.clone(), e.relative_effect))
        .collect();
    let geo = to_geojson(
        hoods.iter().map(|h| (h.neighborhood_id.as_str(), h.geometry.as_ref())),
        &table,
        &relative,
        &report,
    );
    write_json(&cfg.output(SCENARIOS_GEOJSON), &geo)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub output_dir: PathBuf,
    pub n_neighborhoods: usize,
    pub stages: Vec<StageTiming>,
}

/// Every stage in order. The moderation check refits the model many times
/// and runs only with `explain`.
pub fn run_all(cfg: &PipelineConfig, explain: bool) -> Result<RunSummary, PipelineError> {
    let mut stages = Vec::new();
    let mut timed = |name: &str, start: Instant| {
        stages.push(StageTiming {
            stage: name.into(),
            seconds: start.elapsed().as_secs_f64(),
        })
    };
    let s = Instant::now();
    let set = run_features(cfg)?;
    timed("features", s);
    let s = Instant::now();
    run_fit(cfg)?;
    timed("fit", s);
    let s = Instant::now();
    run_effects(cfg)?;
    timed("effects", s);
    let s = Instant::now();
    run_decompose(cfg)?;
    timed("decompose", s);
    if explain {
        let s = Instant::now();
        run_explain(cfg)?;
        timed("explain", s);
    }
    let s = Instant::now();
    run_scenario(cfg)?;
    timed("scenario", s);
    let summary = RunSummary {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        output_dir: cfg.output_dir.clone(),
        n_neighborhoods: set.profiles.len(),
        stages,
    };
    write_json(&cfg.output(RUN_SUMMARY_JSON), &summary)?;
    Ok(summary)
}
