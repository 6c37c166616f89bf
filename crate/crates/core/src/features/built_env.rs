//! Raw built-environment characteristics per neighborhood.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::geo::{haversine_km, WalkModel};
use super::FeatureError;
use crate::ingest::{GtfsBundle, NeighborhoodRaw, PoiRecord};

pub const BUILT_ENV_NAMES: [&str; 8] = [
    "dist_center",
    "dist_subcenter",
    "poi_density",
    "pop_density",
    "mixed_use",
    "car_friendliness",
    "walkability",
    "transit_access",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuiltEnvVector {
    /// km to the neighborhood with the highest POI density
    pub dist_center: f64,
    /// km to the nearest of the ten densest POI neighborhoods
    pub dist_subcenter: f64,
    /// offices, schools, kindergartens and universities per km² built-up
    pub poi_density: f64,
    /// persons per km² built-up
    pub pop_density: f64,
    pub mixed_use: f64,
    /// expressway km per 1000 inhabitants
    pub car_friendliness: f64,
    /// intersections per km² built-up
    pub walkability: f64,
    pub transit_access: f64,
}

impl BuiltEnvVector {
    pub fn to_array(&self) -> [f64; 8] {
        [
            self.dist_center,
            self.dist_subcenter,
            self.poi_density,
            self.pop_density,
            self.mixed_use,
            self.car_friendliness,
            self.walkability,
            self.transit_access,
        ]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        Self {
            dist_center: a[0],
            dist_subcenter: a[1],
            poi_density: a[2],
            pop_density: a[3],
            mixed_use: a[4],
            car_friendliness: a[5],
            walkability: a[6],
            transit_access: a[7],
        }
    }
}

/// Counts density-relevant POIs per neighborhood (nearest centroid) and
/// divides by the built-up area.
pub fn poi_density(
    neighborhoods: &[NeighborhoodRaw],
    pois: &[PoiRecord],
) -> Result<BTreeMap<String, f64>, FeatureError> {
    let mut counts = vec![0usize; neighborhoods.len()];
    if !neighborhoods.is_empty() {
        for poi in pois.iter().filter(|p| p.category.counts_toward_density()) {
            let p = (poi.lat, poi.lon);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (i, n) in neighborhoods.iter().enumerate() {
                let d = haversine_km(p, n.centroid);
                if d < best_d {
                    best_d = d;
                    best = i;
                }
            }
            counts[best] += 1;
        }
    }
    neighborhoods
        .iter()
        .zip(counts)
        .map(|(n, c)| {
            if n.built_up_area_km2 <= 0.0 {
                return Err(FeatureError::ZeroBuiltUpArea(n.neighborhood_id.clone()));
            }
            Ok((n.neighborhood_id.clone(), c as f64 / n.built_up_area_km2))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Centers {
    pub center: String,
    /// Densest first; always contains `center`.
    pub subcenters: Vec<String>,
}

pub const N_SUBCENTERS: usize = 10;

/// Ranks neighborhoods by POI density, highest first, ties by id.
pub fn rank_centers(density: &BTreeMap<String, f64>) -> Option<Centers> {
    let mut ranked: Vec<(&String, f64)> = density.iter().map(|(k, &v)| (k, v)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let center = ranked.first()?.0.clone();
    let subcenters = ranked
        .iter()
        .take(N_SUBCENTERS)
        .map(|(k, _)| (*k).clone())
        .collect();
    Some(Centers { center, subcenters })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GravityParams {
    /// seconds since midnight, inclusive
    pub window_start: u32,
    /// seconds since midnight, exclusive
    pub window_end: u32,
    /// decay constant, minutes
    pub tau_min: f64,
    pub max_walk_min: f64,
    pub walk: WalkModel,
}

impl Default for GravityParams {
    fn default() -> Self {
        Self {
            window_start: 7 * 3600,
            window_end: 9 * 3600,
            tau_min: 10.0,
            max_walk_min: 30.0,
            walk: WalkModel::default(),
        }
    }
}

/// Stops paired with their departures per hour inside the gravity window.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitIndex {
    stops: Vec<((f64, f64), f64)>,
    params: GravityParams,
}

impl TransitIndex {
    pub fn new(gtfs: &GtfsBundle, params: GravityParams) -> Self {
        let mut per_stop: BTreeMap<&str, usize> = BTreeMap::new();
        for d in &gtfs.departures {
            if (params.window_start..params.window_end).contains(&d.departure_time) {
                *per_stop.entry(d.stop_id.as_str()).or_default() += 1;
            }
        }
        let hours = f64::from(params.window_end.saturating_sub(params.window_start)) / 3600.0;
        let stops = gtfs
            .stops
            .iter()
            .filter_map(|s| {
                let n = per_stop.get(s.stop_id.as_str()).copied()?;
                Some(((s.lat, s.lon), n as f64 / hours))
            })
            .collect();
        Self { stops, params }
    }

    /// Builds an index directly from (location, departures per hour) pairs.
    pub fn from_frequencies(stops: Vec<((f64, f64), f64)>, params: GravityParams) -> Self {
        Self { stops, params }
    }

    pub fn accessibility(&self, at: (f64, f64)) -> f64 {
        transit_accessibility_from(at, &self.stops, &self.params)
    }
}

/// Gravity index Σ f_s·exp(−t_s/τ) over stops within the walking cutoff.
pub fn transit_accessibility_from(
    at: (f64, f64),
    stops: &[((f64, f64), f64)],
    params: &GravityParams,
) -> f64 {
    stops
        .iter()
        .filter_map(|&(loc, freq)| {
            let t = params.walk.minutes(at, loc);
            (t <= params.max_walk_min).then(|| freq * (-t / params.tau_min).exp())
        })
        .fold(0.0, |a, b| a + b)
}

pub fn transit_accessibility(at: (f64, f64), gtfs: &GtfsBundle, params: GravityParams) -> f64 {
    TransitIndex::new(gtfs, params).accessibility(at)
}

/// All eight raw characteristics for every neighborhood, in input order.
pub fn build_built_env(
    neighborhoods: &[NeighborhoodRaw],
    pois: &[PoiRecord],
    transit: &TransitIndex,
) -> Result<(Vec<BuiltEnvVector>, Centers), FeatureError> {
    let density = poi_density(neighborhoods, pois)?;
    let centers = rank_centers(&density).ok_or(FeatureError::NoNeighborhoods)?;
    let locate = |id: &str| {
        neighborhoods
            .iter()
            .find(|n| n.neighborhood_id == id)
            .map(|n| n.centroid)
            .expect("center ids come from the neighborhood list")
    };
    let center = locate(&centers.center);
    let subs: Vec<(f64, f64)> = centers.subcenters.iter().map(|id| locate(id)).collect();
    let mut out = Vec::with_capacity(neighborhoods.len());
    for n in neighborhoods {
        if n.population == 0 {
            return Err(FeatureError::ZeroPopulation(n.neighborhood_id.clone()));
        }
        let area = n.built_up_area_km2;
        let dist_center = haversine_km(n.centroid, center);
        let dist_subcenter = subs
            .iter()
            .map(|&s| haversine_km(n.centroid, s))
            .fold(f64::INFINITY, f64::min);
        out.push(BuiltEnvVector {
            dist_center,
            dist_subcenter,
            poi_density: density[&n.neighborhood_id],
            pop_density: n.population as f64 / area,
            mixed_use: n.mixed_use_share,
            car_friendliness: n.expressway_km / (n.population as f64 / 1000.0),
            walkability: n.intersections as f64 / area,
            transit_access: transit.accessibility(n.centroid),
        });
    }
    Ok((out, centers))
}
