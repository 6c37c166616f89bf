//! Neighborhood profiles: outcome, confounders, raw built environment and
//! encoded treatment, plus their tabular and JSON artifacts.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate_neighborhood, ConfounderVector, TripIndex, CONFOUNDER_NAMES};
use super::built_env::{build_built_env, BuiltEnvVector, Centers, GravityParams, TransitIndex, BUILT_ENV_NAMES};
use super::standardize::{Standardizer, FLIPPED};
use super::{FeatureError, WalkModel};
use crate::emissions::EmissionFactorTable;
use crate::features::haversine_km;
use crate::ingest::{ElectionRecord, GtfsBundle, HouseholdRecord, NeighborhoodRaw, PoiRecord, TripRecord};

pub const PROFILE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodProfile {
    pub neighborhood_id: String,
    /// kg CO₂e per household per day
    pub outcome_y: f64,
    pub n_households_sampled: usize,
    pub low_support: bool,
    pub confounders: ConfounderVector,
    pub built_env_raw: BuiltEnvVector,
    pub treatment: [f64; 8],
    pub centroid: (f64, f64),
    pub inside_or_on_ringbahn: bool,
    /// walking minutes from the centroid to the nearest rail station, if any
    pub rail_walk_min: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureOptions {
    /// average households with their survey weights
    pub weighted: bool,
    pub min_households: usize,
    pub gravity: GravityParams,
}

impl Default for FeatureOptions {
    fn default() -> Self {
        Self {
            weighted: true,
            min_households: 10,
            gravity: GravityParams::default(),
        }
    }
}

pub struct FeatureInputs<'a> {
    pub neighborhoods: &'a [NeighborhoodRaw],
    pub households: &'a [HouseholdRecord],
    pub trips: &'a [TripRecord],
    pub pois: &'a [PoiRecord],
    pub gtfs: &'a GtfsBundle,
    pub elections: &'a [ElectionRecord],
    pub factors: &'a EmissionFactorTable<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSet {
    pub schema_version: u32,
    pub profiles: Vec<NeighborhoodProfile>,
    pub standardizer: Standardizer<f64>,
    pub centers: Centers,
    /// neighborhoods without any surveyed household
    pub unsurveyed: Vec<String>,
}

impl FeatureSet {
    pub fn confounder_matrix(&self) -> Array2<f64> {
        confounder_matrix(&self.profiles)
    }

    pub fn treatment_matrix(&self) -> Array2<f64> {
        treatment_matrix(&self.profiles)
    }

    pub fn outcomes(&self) -> Vec<f64> {
        self.profiles.iter().map(|p| p.outcome_y).collect()
    }
}

pub fn confounder_matrix(profiles: &[NeighborhoodProfile]) -> Array2<f64> {
    Array2::from_shape_fn((profiles.len(), 9), |(i, j)| profiles[i].confounders.to_array()[j])
}

pub fn treatment_matrix(profiles: &[NeighborhoodProfile]) -> Array2<f64> {
    Array2::from_shape_fn((profiles.len(), 8), |(i, j)| profiles[i].treatment[j])
}

/// Walking minutes to the nearest of `stations`.
pub fn nearest_station_minutes(at: (f64, f64), stations: &[(f64, f64)], walk: &WalkModel) -> Option<f64> {
    stations
        .iter()
        .map(|&s| walk.minutes_for_km(haversine_km(at, s)))
        .min_by(f64::total_cmp)
}

/// Aggregates, measures and encodes every surveyed neighborhood. Output is
/// sorted by neighborhood id, so input order never matters.
pub fn build_profiles(inputs: &FeatureInputs<'_>, opts: &FeatureOptions) -> Result<FeatureSet, FeatureError> {
    let mut hoods: Vec<NeighborhoodRaw> = inputs.neighborhoods.to_vec();
    hoods.sort_by(|a, b| a.neighborhood_id.cmp(&b.neighborhood_id));
    if hoods.is_empty() {
        return Err(FeatureError::NoNeighborhoods);
    }
    let transit = TransitIndex::new(inputs.gtfs, opts.gravity);
    let (env, centers) = build_built_env(&hoods, inputs.pois, &transit)?;

    let elections: BTreeMap<&str, f64> = inputs
        .elections
        .iter()
        .map(|e| (e.neighborhood_id.as_str(), e.green_share))
        .collect();
    let stations: Vec<(f64, f64)> = hoods
        .iter()
        .flat_map(|n| n.rail_station_centroids.iter().copied())
        .collect();
    let trips = TripIndex::new(inputs.trips);
    let mut by_hood: BTreeMap<&str, Vec<HouseholdRecord>> = BTreeMap::new();
    for h in inputs.households {
        by_hood.entry(h.neighborhood_id.as_str()).or_default().push(h.clone());
    }
    if let Some(h) = inputs
        .households
        .iter()
        .find(|h| hoods.binary_search_by(|n| n.neighborhood_id.as_str().cmp(&h.neighborhood_id)).is_err())
    {
        return Err(FeatureError::UnknownNeighborhood(h.neighborhood_id.clone()));
    }

    let staged: Vec<Result<Option<NeighborhoodProfile>, FeatureError>> = hoods
        .par_iter()
        .zip(env.par_iter())
        .map(|(n, e)| {
            let Some(members) = by_hood.get(n.neighborhood_id.as_str()) else {
                return Ok(None);
            };
            let green = elections
                .get(n.neighborhood_id.as_str())
                .copied()
                .or(n.green_vote_share)
                .ok_or_else(|| FeatureError::MissingGreenShare(n.neighborhood_id.clone()))?;
            let agg = aggregate_neighborhood(
                members,
                &trips,
                inputs.factors,
                &n.neighborhood_id,
                green,
                opts.weighted,
            )?;
            Ok(Some(NeighborhoodProfile {
                neighborhood_id: n.neighborhood_id.clone(),
                outcome_y: agg.outcome_y,
                n_households_sampled: agg.n_households,
                low_support: agg.n_households < opts.min_households,
                confounders: agg.confounders,
                built_env_raw: *e,
                treatment: [0.0; 8],
                centroid: n.centroid,
                inside_or_on_ringbahn: n.inside_or_on_ringbahn,
                rail_walk_min: nearest_station_minutes(n.centroid, &stations, &opts.gravity.walk),
            }))
        })
        .collect();
    let mut profiles = Vec::new();
    let mut unsurveyed = Vec::new();
    for (n, p) in hoods.iter().zip(staged) {
        match p? {
            Some(p) => profiles.push(p),
            None => unsurveyed.push(n.neighborhood_id.clone()),
        }
    }
    let standardizer = encode_treatments(&mut profiles)?;
    Ok(FeatureSet {
        schema_version: PROFILE_SCHEMA_VERSION,
        profiles,
        standardizer,
        centers,
        unsurveyed,
    })
}

/// Fits the standardizer on the profiles' raw built environment and fills
/// every `treatment`.
pub fn encode_treatments(profiles: &mut [NeighborhoodProfile]) -> Result<Standardizer<f64>, FeatureError> {
    let raw = Array2::from_shape_fn((profiles.len(), 8), |(i, j)| profiles[i].built_env_raw.to_array()[j]);
    let s = Standardizer::fit(raw.view(), &BUILT_ENV_NAMES, &FLIPPED)?;
    for p in profiles.iter_mut() {
        let t = s.transform_row(&p.built_env_raw.to_array());
        p.treatment.copy_from_slice(&t);
    }
    Ok(s)
}

fn header() -> Vec<String> {
    let mut h: Vec<String> = ["neighborhood_id", "outcome_y", "n_households_sampled", "low_support"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend(CONFOUNDER_NAMES.iter().map(|s| s.to_string()));
    h.extend(BUILT_ENV_NAMES.iter().map(|s| s.to_string()));
    h.extend(BUILT_ENV_NAMES.iter().map(|s| format!("t_{s}")));
    h.extend(
        ["centroid_lat", "centroid_lon", "inside_or_on_ringbahn", "rail_walk_min"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}

/// One row per neighborhood: raw and encoded columns.
pub fn write_features_csv<W: Write>(out: W, profiles: &[NeighborhoodProfile]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header())?;
    for p in profiles {
        let mut rec = vec![
            p.neighborhood_id.clone(),
            p.outcome_y.to_string(),
            p.n_households_sampled.to_string(),
            p.low_support.to_string(),
        ];
        rec.extend(p.confounders.to_array().iter().map(f64::to_string));
        rec.extend(p.built_env_raw.to_array().iter().map(f64::to_string));
        rec.extend(p.treatment.iter().map(f64::to_string));
        rec.push(p.centroid.0.to_string());
        rec.push(p.centroid.1.to_string());
        rec.push(p.inside_or_on_ringbahn.to_string());
        rec.push(p.rail_walk_min.map_or(String::new(), |m| m.to_string()));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_features_csv`].
pub fn read_features_csv<R: Read>(input: R) -> Result<Vec<NeighborhoodProfile>, FeatureError> {
    let mut rdr = csv::Reader::from_reader(input);
    let expected = header();
    let got: Vec<String> = rdr
        .headers()
        .map_err(|e| FeatureError::Table(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if got != expected {
        return Err(FeatureError::Table("unexpected features.csv header".into()));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| FeatureError::Table(e.to_string()))?;
        let row = i + 1;
        let bad = |what: &str| FeatureError::Table(format!("row {row}: bad {what}"));
        let num = |k: usize| -> Result<f64, FeatureError> {
            rec.get(k).and_then(|s| s.parse().ok()).ok_or_else(|| bad(&expected[k]))
        };
        let flag = |k: usize| -> Result<bool, FeatureError> {
            rec.get(k).and_then(|s| s.parse().ok()).ok_or_else(|| bad(&expected[k]))
        };
        let mut conf = [0.0; 9];
        for (j, c) in conf.iter_mut().enumerate() {
            *c = num(4 + j)?;
        }
        let mut raw = [0.0; 8];
        for (j, c) in raw.iter_mut().enumerate() {
            *c = num(13 + j)?;
        }
        let mut treatment = [0.0; 8];
        for (j, c) in treatment.iter_mut().enumerate() {
            *c = num(21 + j)?;
        }
        let rail = rec.get(32).unwrap_or("");
        out.push(NeighborhoodProfile {
            neighborhood_id: rec.get(0).unwrap_or("").to_string(),
            outcome_y: num(1)?,
            n_households_sampled: rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("n_households_sampled"))?,
            low_support: flag(3)?,
            confounders: ConfounderVector::from_array(conf),
            built_env_raw: BuiltEnvVector::from_array(raw),
            treatment,
            centroid: (num(29)?, num(30)?),
            inside_or_on_ringbahn: flag(31)?,
            rail_walk_min: if rail.is_empty() { None } else { Some(num(32)?) },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Mode, PoiCategory, Stop};

    fn fixture() -> (Vec<NeighborhoodRaw>, Vec<HouseholdRecord>, Vec<TripRecord>, Vec<PoiRecord>, GtfsBundle) {
        let mut hoods = Vec::new();
        let mut households = Vec::new();
        let mut trips = Vec::new();
        let mut pois = Vec::new();
        for i in 0..14u32 {
            let c = (52.45 + 0.02 * f64::from(i), 13.3 + 0.03 * f64::from(i % 3));
            let id = format!("1{i:04}");
            hoods.push(NeighborhoodRaw {
                neighborhood_id: id.clone(),
                centroid: c,
                population: 5000 + 1000 * u64::from(i),
                built_up_area_km2: 1.0 + f64::from(i) * 0.5,
                mixed_use_share: 0.1 * f64::from(i),
                expressway_km: f64::from(i % 4),
                intersections: 30 + 7 * u64::from(i),
                green_vote_share: Some(0.1 + 0.02 * f64::from(i)),
                rail_station_centroids: if i % 2 == 0 { vec![c] } else { vec![] },
                inside_or_on_ringbahn: i < 3,
                geometry: None,
            });
            for k in 0..=i {
                pois.push(PoiRecord { lat: c.0, lon: c.1, category: PoiCategory::Office });
                let hid = format!("{id}-{k}");
                households.push(HouseholdRecord {
                    household_id: hid.clone(),
                    neighborhood_id: id.clone(),
                    income: 2000.0 + 100.0 * f64::from(k + i),
                    size: 2,
                    member_ages: vec![30 + k, 8],
                    uni_degrees_over25: k % 2,
                    cars: i % 2,
                    bikes: 1,
                    driving_licenses_adults: 1,
                    transit_subscriptions: 1,
                    weight: 1.0,
                });
                trips.push(TripRecord {
                    household_id: hid,
                    person_id: "p".into(),
                    mode: Mode::Car,
                    distance_km: f64::from(i + k),
                    weight: 1.0,
                });
            }
        }
        let gtfs = GtfsBundle {
            service_date: chrono::NaiveDate::from_ymd_opt(2024, 1, 2).unwrap(),
            stops: vec![Stop { stop_id: "S".into(), lat: 52.47, lon: 13.33 }],
            departures: vec![],
        };
        (hoods, households, trips, pois, gtfs)
    }

    fn build(hoods: &[NeighborhoodRaw], hh: &[HouseholdRecord], trips: &[TripRecord], pois: &[PoiRecord], gtfs: &GtfsBundle) -> Result<FeatureSet, FeatureError> {
        let factors = EmissionFactorTable::itf();
        let inputs = FeatureInputs {
            neighborhoods: hoods,
            households: hh,
            trips,
            pois,
            gtfs,
            elections: &[],
            factors: &factors,
        };
        build_profiles(&inputs, &FeatureOptions { gravity: GravityParams::default(), ..Default::default() })
    }

    #[test]
    fn profiles_are_encoded() {
        let (h, hh, t, p, g) = fixture();
        // transit column would be constant without departures
        let err = build(&h, &hh, &t, &p, &g).unwrap_err();
        assert_eq!(err, FeatureError::ConstantColumn("transit_access".into()));
        let mut g = g;
        g.departures = (0..20)
            .map(|k| crate::ingest::Departure { stop_id: "S".into(), departure_time: 7 * 3600 + 60 * k, service_days: 2 })
            .collect();
        let fs = build(&h, &hh, &t, &p, &g).unwrap();
        assert_eq!(fs.profiles.len(), 14);
        assert_eq!(fs.profiles.iter().filter(|p| p.low_support).count(), 9);
        for p in &fs.profiles {
            assert!(p.built_env_raw.dist_subcenter <= p.built_env_raw.dist_center);
        }
        let tm = fs.treatment_matrix();
        for col in tm.columns() {
            let c = col.to_vec();
            assert!(crate::stats::mean(&c).abs() < 1e-9);
            assert!((crate::stats::std_dev(&c) - 1.0).abs() < 1e-9);
        }
        assert_eq!(fs.profiles[1].rail_walk_min.map(|m| m > 0.0), Some(true));
        assert_eq!(fs.profiles[0].rail_walk_min, Some(0.0));

        let mut shuffled = h.clone();
        shuffled.reverse();
        let mut hh2 = hh.clone();
        hh2.reverse();
        assert_eq!(build(&shuffled, &hh2, &t_rev(&t), &p, &g).unwrap().profiles, fs.profiles);

        let mut buf = Vec::new();
        write_features_csv(&mut buf, &fs.profiles).unwrap();
        assert_eq!(read_features_csv(buf.as_slice()).unwrap(), fs.profiles);
    }

    fn t_rev(t: &[TripRecord]) -> Vec<TripRecord> {
        let mut v = t.to_vec();
        v.reverse();
        v
    }

    #[test]
    fn household_in_unknown_neighborhood() {
        let (h, mut hh, t, p, g) = fixture();
        hh[0].neighborhood_id = "99999".into();
        assert_eq!(
            build(&h, &hh, &t, &p, &g).unwrap_err(),
            FeatureError::UnknownNeighborhood("99999".into())
        );
    }

    #[test]
    fn missing_green_share() {
        let (mut h, hh, t, p, g) = fixture();
        h[2].green_vote_share = None;
        assert!(matches!(build(&h, &hh, &t, &p, &g), Err(FeatureError::MissingGreenShare(_))));
    }
}
