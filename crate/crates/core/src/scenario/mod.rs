//! Housing-allocation scenarios and the induced transport emissions of
//! their new residents.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::causal_dml::EffectEstimate;
use crate::features::NeighborhoodProfile;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("unknown neighborhoods: {}", .0.join(", "))]
    UnknownNeighborhood(Vec<String>),
    #[error("scenario {0} has no target neighborhoods")]
    EmptyTargetSet(String),
    #[error("scenario {0} allocates no units")]
    NoUnits(String),
    #[error("need at least {k} neighborhoods, found {n}")]
    TooFewNeighborhoods { n: usize, k: usize },
    #[error("the scenario file names neither a Planned scenario nor a unit count")]
    NoPlannedUnits,
    #[error("invalid scenario document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub allocations: BTreeMap<String, u64>,
}

impl Scenario {
    pub fn new(name: impl Into<String>, allocations: BTreeMap<String, u64>) -> Self {
        Self {
            name: name.into(),
            allocations,
        }
    }

    pub fn total_units(&self) -> u64 {
        self.allocations.values().sum()
    }
}

/// Total effect (kg CO₂e per household-day) per neighborhood.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EffectTable {
    pub city_average: f64,
    pub total_effect: BTreeMap<String, f64>,
}

impl EffectTable {
    pub fn new(city_average: f64, total_effect: BTreeMap<String, f64>) -> Self {
        Self {
            city_average,
            total_effect,
        }
    }

    pub fn from_estimates(city_average: f64, effects: &[EffectEstimate<f64>]) -> Self {
        Self::new(
            city_average,
            effects.iter().map(|e| (e.neighborhood_id.clone(), e.total_effect)).collect(),
        )
    }

    /// Ids ordered by ascending total effect, ties by id.
    pub fn ranked(&self) -> Vec<&str> {
        let mut ids: Vec<(&str, f64)> = self.total_effect.iter().map(|(k, &v)| (k.as_str(), v)).collect();
        ids.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
        ids.into_iter().map(|(k, _)| k).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub neighborhood_id: String,
    pub units: u64,
    pub total_effect: f64,
    /// city average plus the neighborhood's total effect
    pub induced_emissions: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub name: String,
    pub total_units: u64,
    /// kg CO₂e per household-day
    pub induced_mean_emissions: f64,
    pub relative_to_average: f64,
    pub contributions: Vec<Contribution>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub schema_version: u32,
    pub city_average: f64,
    pub scenarios: Vec<ScenarioResult>,
}

impl ScenarioReport {
    pub fn get(&self, name: &str) -> Option<&ScenarioResult> {
        self.scenarios.iter().find(|s| s.name == name)
    }
}

/// Mean per-household emissions of the new residents, assuming each
/// inherits the city average plus its neighborhood's total effect.
pub fn evaluate_scenario(scenario: &Scenario, effects: &EffectTable) -> Result<ScenarioResult, ScenarioError> {
    let unknown: Vec<String> = scenario
        .allocations
        .keys()
        .filter(|id| !effects.total_effect.contains_key(*id))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(ScenarioError::UnknownNeighborhood(unknown));
    }
    let total_units = scenario.total_units();
    if total_units == 0 {
        return Err(ScenarioError::NoUnits(scenario.name.clone()));
    }
    let ybar = effects.city_average;
    let mut weighted = 0.0;
    let contributions: Vec<Contribution> = scenario
        .allocations
        .iter()
        .filter(|(_, &u)| u > 0)
        .map(|(id, &units)| {
            let total_effect = effects.total_effect[id];
            let induced = ybar + total_effect;
            weighted += units as f64 * induced;
            Contribution {
                neighborhood_id: id.clone(),
                units,
                total_effect,
                induced_emissions: induced,
            }
        })
        .collect();
    let induced_mean = weighted / total_units as f64;
    Ok(ScenarioResult {
        name: scenario.name.clone(),
        total_units,
        induced_mean_emissions: induced_mean,
        relative_to_average: (induced_mean - ybar) / ybar,
        contributions,
    })
}

/// Spreads `units` evenly over `targets`; the remainder goes one unit each
/// to the lowest-effect targets.
pub fn even_split(
    name: &str,
    targets: &[&str],
    units: u64,
    effects: &EffectTable,
) -> Result<Scenario, ScenarioError> {
    let unknown: Vec<String> = targets
        .iter()
        .filter(|id| !effects.total_effect.contains_key(**id))
        .map(|s| s.to_string())
        .collect();
    if !unknown.is_empty() {
        return Err(ScenarioError::UnknownNeighborhood(unknown));
    }
    let mut ranked: Vec<&str> = targets.to_vec();
    ranked.sort_by(|a, b| {
        effects.total_effect[*a]
            .total_cmp(&effects.total_effect[*b])
            .then_with(|| a.cmp(b))
    });
    ranked.dedup();
    if ranked.is_empty() {
        return Err(ScenarioError::EmptyTargetSet(name.to_string()));
    }
    let k = ranked.len() as u64;
    let (base, rem) = (units / k, units % k);
    let allocations = ranked
        .iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), base + u64::from((i as u64) < rem)))
        .collect();
    Ok(Scenario::new(name, allocations))
}

/// Even split over the `k` neighborhoods with the lowest total effect.
pub fn optimize_allocation(effects: &EffectTable, units: u64, k: usize) -> Result<Scenario, ScenarioError> {
    let ranked = effects.ranked();
    if k == 0 || ranked.len() < k {
        return Err(ScenarioError::TooFewNeighborhoods {
            n: ranked.len(),
            k: k.max(1),
        });
    }
    even_split("Optimum", &ranked[..k], units, effects)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PresetParams {
    /// walk minutes from centroid to the nearest rail station
    pub tod_walk_min: f64,
    pub optimum_k: usize,
}

impl Default for PresetParams {
    fn default() -> Self {
        Self {
            tod_walk_min: 7.0,
            optimum_k: 20,
        }
    }
}

/// Planned (as given), TOD_rail, Ringbahn and Optimum, the latter three
/// allocating the same number of units as the plan.
pub fn preset_scenarios(
    profiles: &[NeighborhoodProfile],
    effects: &EffectTable,
    planned: &Scenario,
    params: &PresetParams,
) -> Result<Vec<Scenario>, ScenarioError> {
    let units = planned.total_units();
    if units == 0 {
        return Err(ScenarioError::NoUnits(planned.name.clone()));
    }
    let mut out = vec![Scenario::new("Planned", planned.allocations.clone())];
    out.extend(alternative_presets(profiles, effects, units, params)?);
    Ok(out)
}

/// TOD_rail, Ringbahn and Optimum for `units` new residential units.
pub fn alternative_presets(
    profiles: &[NeighborhoodProfile],
    effects: &EffectTable,
    units: u64,
    params: &PresetParams,
) -> Result<Vec<Scenario>, ScenarioError> {
    let tod: Vec<&str> = profiles
        .iter()
        .filter(|p| p.rail_walk_min.is_some_and(|m| m < params.tod_walk_min))
        .map(|p| p.neighborhood_id.as_str())
        .collect();
    let ring: Vec<&str> = profiles
        .iter()
        .filter(|p| p.inside_or_on_ringbahn)
        .map(|p| p.neighborhood_id.as_str())
        .collect();
    Ok(vec![
        even_split("TOD_rail", &tod, units, effects)?,
        even_split("Ringbahn", &ring, units, effects)?,
        optimize_allocation(effects, units, params.optimum_k)?,
    ])
}

pub fn evaluate_all(scenarios: &[Scenario], effects: &EffectTable) -> Result<ScenarioReport, ScenarioError> {
    let scenarios = scenarios
        .par_iter()
        .map(|s| evaluate_scenario(s, effects))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScenarioReport {
        schema_version: SCENARIO_SCHEMA_VERSION,
        city_average: effects.city_average,
        scenarios,
    })
}

/// `scenarios.json`: named allocations, one of which may be the plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    /// units for the presets when there is no Planned scenario
    #[serde(default)]
    pub units: Option<u64>,
    #[serde(default)]
    pub scenarios: Vec<Scenario>,
}

fn schema_version() -> u32 {
    SCENARIO_SCHEMA_VERSION
}

impl ScenarioFile {
    pub fn from_json(s: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(s).map_err(|e| ScenarioError::Document(e.to_string()))
    }

    pub fn planned(&self) -> Option<&Scenario> {
        self.scenarios.iter().find(|s| s.name == "Planned")
    }
}

/// Presets plus every extra scenario in the file, evaluated together.
pub fn run_scenarios(
    file: &ScenarioFile,
    profiles: &[NeighborhoodProfile],
    effects: &EffectTable,
    params: &PresetParams,
) -> Result<ScenarioReport, ScenarioError> {
    let mut all = match (file.planned(), file.units) {
        (Some(p), _) => preset_scenarios(profiles, effects, p, params)?,
        (None, Some(units)) => alternative_presets(profiles, effects, units, params)?,
        (None, None) => return Err(ScenarioError::NoPlannedUnits),
    };
    all.extend(file.scenarios.iter().filter(|s| s.name != "Planned").cloned());
    evaluate_all(&all, effects)
}

/// Neighborhood polygons with effect and per-scenario unit properties.
pub fn to_geojson<'a>(
    neighborhoods: impl IntoIterator<Item = (&'a str, Option<&'a Value>)>,
    effects: &EffectTable,
    relative: &BTreeMap<String, f64>,
    report: &ScenarioReport,
) -> Value {
    let features: Vec<Value> = neighborhoods
        .into_iter()
        .map(|(id, geometry)| {
            let mut props = serde_json::Map::new();
            props.insert("neighborhood_id".into(), json!(id));
            props.insert("total_effect".into(), json!(effects.total_effect.get(id)));
            props.insert("relative_effect".into(), json!(relative.get(id)));
            for s in &report.scenarios {
                let units = s
                    .contributions
                    .iter()
                    .find(|c| c.neighborhood_id == id)
                    .map_or(0, |c| c.units);
                props.insert(format!("units_{}", s.name), json!(units));
            }
            json!({"type": "Feature", "geometry": geometry, "properties": props})
        })
        .collect();
    json!({"type": "FeatureCollection", "features": features})
}

#[cfg(test)]
mod tests;
