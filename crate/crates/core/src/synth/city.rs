//! A synthetic city written in the ingest file formats, with the true
//! per-neighborhood effects alongside.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::emissions::EmissionFactorTable;
use crate::features::{
    build_built_env, GravityParams, Standardizer, TransitIndex, BUILT_ENV_NAMES, FLIPPED,
};
use crate::ingest::{
    write_elections, write_gtfs, write_households, write_neighborhoods, write_planned_units,
    write_pois, write_trips, Departure, ElectionRecord, GtfsBundle, HouseholdRecord, Mode,
    NeighborhoodRaw, PlannedUnits, PoiCategory, PoiRecord, Stop, TripRecord,
};
use crate::rng::{derive_seed, rng_from};

const CITY_CENTER: (f64, f64) = (52.52, 13.405);
const KM_PER_DEG_LAT: f64 = 111.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CitySpec {
    pub n_neighborhoods: usize,
    pub min_households: usize,
    pub max_households: usize,
    pub radius_km: f64,
    /// 0 removes the dependence of car ownership and transit passes on
    /// urbanity
    pub self_selection: f64,
    /// θ_j = base_j · (1 + moderation · z), z the standardized income level
    pub moderation: f64,
    /// base θ per treatment dimension, kg CO₂e per household-day per sd
    pub base_theta: [f64; 8],
    /// household-level outcome noise, kg CO₂e per day
    pub noise_sd: f64,
    pub planned_units: u64,
    pub planned_targets: usize,
    pub seed: u64,
}

impl Default for CitySpec {
    fn default() -> Self {
        Self {
            n_neighborhoods: 190,
            min_households: 20,
            max_households: 40,
            radius_km: 18.0,
            self_selection: 1.0,
            moderation: 0.4,
            base_theta: [-0.20, -0.10, -0.15, -0.15, -0.05, -0.05, -0.05, -0.10],
            noise_sd: 0.8,
            planned_units: 64_000,
            planned_targets: 25,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub neighborhood_id: String,
    pub theta: [f64; 8],
    pub treatment: [f64; 8],
    pub total_effect: f64,
    /// sample mean of the generated household outcomes
    pub outcome_mean: f64,
    pub urbanity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCity {
    pub neighborhoods: Vec<NeighborhoodRaw>,
    pub households: Vec<HouseholdRecord>,
    pub trips: Vec<TripRecord>,
    pub pois: Vec<PoiRecord>,
    pub gtfs: GtfsBundle,
    pub elections: Vec<ElectionRecord>,
    pub planned: Vec<PlannedUnits>,
    pub truth: Vec<TruthRow>,
}

fn offset(km_north: f64, km_east: f64) -> (f64, f64) {
    let lat = CITY_CENTER.0 + km_north / KM_PER_DEG_LAT;
    let lon = CITY_CENTER.1 + km_east / (KM_PER_DEG_LAT * CITY_CENTER.0.to_radians().cos());
    (lat, lon)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u32 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map_or(0, |p| p.sample(rng) as u32)
}

fn square(centroid: (f64, f64), area_km2: f64) -> serde_json::Value {
    let h = area_km2.sqrt() / 2.0;
    let dlat = h / KM_PER_DEG_LAT;
    let dlon = h / (KM_PER_DEG_LAT * centroid.0.to_radians().cos());
    let (lat, lon) = centroid;
    json!({
        "type": "Polygon",
        "coordinates": [[
            [lon - dlon, lat - dlat],
            [lon + dlon, lat - dlat],
            [lon + dlon, lat + dlat],
            [lon - dlon, lat + dlat],
            [lon - dlon, lat - dlat],
        ]],
    })
}

struct Geography {
    hoods: Vec<NeighborhoodRaw>,
    urbanity: Vec<f64>,
    /// latent income level in [0, 1]
    affluence: Vec<f64>,
    pois: Vec<PoiRecord>,
    gtfs: GtfsBundle,
}

fn geography(spec: &CitySpec) -> Geography {
    let mut rng = rng_from(derive_seed(spec.seed, 1));
    let n = spec.n_neighborhoods;
    let mut hoods = Vec::with_capacity(n);
    let mut urbanity = Vec::with_capacity(n);
    let mut affluence = Vec::with_capacity(n);
    for i in 0..n {
        let r = spec.radius_km * rng.random::<f64>().sqrt();
        let phi = std::f64::consts::TAU * rng.random::<f64>();
        let centroid = offset(r * phi.sin(), r * phi.cos());
        let u = (-r / 7.0).exp();
        let area = 0.8 + 4.0 * (1.0 - u) * (0.7 + 0.6 * rng.random::<f64>());
        let population = (3000.0 + 30000.0 * u * (0.7 + 0.6 * rng.random::<f64>())).round() as u64;
        let mixed = (0.05 + 0.55 * u + 0.08 * normal(&mut rng)).clamp(0.0, 1.0);
        let expressway = (4.0 * (1.0 - u) + 0.8 * normal(&mut rng)).max(0.0);
        let intersections = (area * (30.0 + 120.0 * u) * (0.8 + 0.4 * rng.random::<f64>())).round() as u64;
        hoods.push(NeighborhoodRaw {
            neighborhood_id: format!("{}", 10000 + 50 * i),
            centroid,
            population,
            built_up_area_km2: area,
            mixed_use_share: mixed,
            expressway_km: expressway,
            intersections,
            green_vote_share: None,
            rail_station_centroids: Vec::new(),
            inside_or_on_ringbahn: r <= 6.2,
            geometry: Some(square(centroid, area)),
        });
        urbanity.push(u);
        affluence.push((0.6 * rng.random::<f64>() + 0.4 * (1.0 - u)).clamp(0.0, 1.0));
    }

    // radial lines plus a ring line
    let mut stations = Vec::new();
    for line in 0..8 {
        let phi = std::f64::consts::TAU * (line as f64 + 0.3 * rng.random::<f64>()) / 8.0;
        let mut r = 1.0;
        while r < spec.radius_km - 1.0 {
            stations.push(offset(r * phi.sin(), r * phi.cos()));
            r += 1.4 + 0.6 * rng.random::<f64>();
        }
    }
    for k in 0..20 {
        let phi = std::f64::consts::TAU * k as f64 / 20.0;
        stations.push(offset(6.0 * phi.sin(), 6.0 * phi.cos()));
    }
    for &s in &stations {
        let nearest = (0..n)
            .min_by(|&a, &b| {
                crate::features::haversine_km(s, hoods[a].centroid)
                    .total_cmp(&crate::features::haversine_km(s, hoods[b].centroid))
            })
            .expect("at least one neighborhood");
        hoods[nearest].rail_station_centroids.push(s);
    }

    let mut pois = Vec::new();
    for (h, &u) in hoods.iter().zip(&urbanity) {
        let count = poisson(&mut rng, h.built_up_area_km2 * (5.0 + 60.0 * u));
        let spread = h.built_up_area_km2.sqrt() / 3.0;
        for _ in 0..count {
            let dn = spread * normal(&mut rng);
            let de = spread * normal(&mut rng);
            let lat = h.centroid.0 + dn / KM_PER_DEG_LAT;
            let lon = h.centroid.1 + de / (KM_PER_DEG_LAT * h.centroid.0.to_radians().cos());
            let c: f64 = rng.random();
            let category = match c {
                c if c < 0.5 => PoiCategory::Office,
                c if c < 0.65 => PoiCategory::School,
                c if c < 0.85 => PoiCategory::Kindergarten,
                c if c < 0.9 => PoiCategory::University,
                _ => PoiCategory::Other,
            };
            pois.push(PoiRecord { lat, lon, category });
        }
    }

    let weekdays = 0b001_1111;
    let mut stops = Vec::new();
    let mut departures = Vec::new();
    let mut add_stop = |stops: &mut Vec<Stop>, id: String, at: (f64, f64), per_hour: u32| {
        let headway = 3600 / per_hour.max(1);
        let mut t = 6 * 3600 + headway / 2;
        while t < 10 * 3600 {
            departures.push(Departure {
                stop_id: id.clone(),
                departure_time: t,
                service_days: weekdays,
            });
            t += headway;
        }
        stops.push(Stop {
            stop_id: id,
            lat: at.0,
            lon: at.1,
        });
    };
    for (i, (h, &u)) in hoods.iter().zip(&urbanity).enumerate() {
        let jitter = offset(0.3 * normal(&mut rng), 0.3 * normal(&mut rng));
        let at = (
            h.centroid.0 + jitter.0 - CITY_CENTER.0,
            h.centroid.1 + jitter.1 - CITY_CENTER.1,
        );
        let per_hour = (2.0 + 10.0 * u).round() as u32;
        add_stop(&mut stops, format!("bus{i}"), at, per_hour);
    }
    for (i, &s) in stations.iter().enumerate() {
        add_stop(&mut stops, format!("rail{i}"), s, 10);
    }
    let gtfs = GtfsBundle {
        service_date: NaiveDate::from_ymd_opt(2024, 3, 5).expect("valid date"),
        stops,
        departures,
    };
    Geography {
        hoods,
        urbanity,
        affluence,
        pois,
        gtfs,
    }
}

/// Treatment encoding exactly as the feature pipeline computes it.
fn treatments(g: &Geography) -> Vec<[f64; 8]> {
    let transit = TransitIndex::new(&g.gtfs, GravityParams::default());
    let (env, _) = build_built_env(&g.hoods, &g.pois, &transit).expect("generated city is valid");
    let raw = Array2::from_shape_fn((env.len(), 8), |(i, j)| env[i].to_array()[j]);
    let s = Standardizer::fit(raw.view(), &BUILT_ENV_NAMES, &FLIPPED).expect("non-constant columns");
    env.iter()
        .map(|e| {
            let mut t = [0.0; 8];
            t.copy_from_slice(&s.transform_row(&e.to_array()));
            t
        })
        .collect()
}

pub fn generate_city(spec: &CitySpec) -> SyntheticCity {
    let g = geography(spec);
    let t = treatments(&g);
    let factors = EmissionFactorTable::<f64>::itf();
    let mut rng = rng_from(derive_seed(spec.seed, 2));
    let mut households = Vec::new();
    let mut trips = Vec::new();
    let mut elections = Vec::new();
    let mut truth = Vec::new();
    let s = spec.self_selection;
    for (i, h) in g.hoods.iter().enumerate() {
        let u = g.urbanity[i];
        let z = (g.affluence[i] - 0.5) / 0.29;
        let theta: [f64; 8] = std::array::from_fn(|j| spec.base_theta[j] * (1.0 + spec.moderation * z));
        let total_effect: f64 = theta.iter().zip(&t[i]).map(|(a, b)| a * b).sum();
        let green = (0.08 + 0.25 * u + 0.05 * normal(&mut rng)).clamp(0.0, 1.0);
        elections.push(ElectionRecord {
            neighborhood_id: h.neighborhood_id.clone(),
            green_share: green,
        });
        let n_h = rng.random_range(spec.min_households..=spec.max_households);
        let mut outcome_sum = 0.0;
        for k in 0..n_h {
            let household_id = format!("{}-{k:03}", h.neighborhood_id);
            let income = (2200.0 + 1800.0 * g.affluence[i]) * (0.35 * normal(&mut rng)).exp();
            let size = (1 + poisson(&mut rng, 0.6 + 1.0 * (1.0 - u))).min(6);
            let adults = if size >= 2 && rng.random_bool(0.7) { 2 } else { 1 };
            let mut member_ages = Vec::with_capacity(size as usize);
            for m in 0..size {
                if m < adults {
                    let mean_age = 38.0 + 12.0 * (1.0 - u);
                    member_ages.push((mean_age + 13.0 * normal(&mut rng)).clamp(19.0, 90.0).round() as u32);
                } else {
                    member_ages.push(rng.random_range(0..=17));
                }
            }
            let over25 = member_ages.iter().filter(|&&a| a > 25).count() as u32;
            let p_uni = (0.3 + 0.4 * u * s).clamp(0.0, 1.0);
            let uni = (0..over25).filter(|_| rng.random_bool(p_uni)).count() as u32;
            let car_mean = (1.0 + s * (0.6 - 1.2 * u) + 0.0002 * (income - 3000.0)).max(0.05);
            let cars = poisson(&mut rng, car_mean).min(4);
            let bikes = poisson(&mut rng, 0.8 + 0.6 * u).min(size + 1);
            let licenses = (0..adults).filter(|_| rng.random_bool(if cars > 0 { 0.9 } else { 0.5 })).count() as u32;
            let p_sub = (0.3 + s * (0.5 * u - 0.15)).clamp(0.0, 1.0);
            let subs = (0..size).filter(|_| rng.random_bool(p_sub)).count() as u32;
            let baseline = 1.0 + 0.00035 * income + 0.9 * f64::from(cars) + 0.25 * f64::from(size)
                - 0.6 * f64::from(subs) / f64::from(size)
                - 2.0 * green;
            let e = (baseline + total_effect + spec.noise_sd * normal(&mut rng)).max(0.0);
            outcome_sum += e;
            // split the day's emissions over a car and a transit trip plus a walk
            let car_share = if e > 0.0 { 0.5 + 0.4 * rng.random::<f64>() } else { 0.0 };
            let person = |p: u32| format!("p{}", p % size + 1);
            trips.push(TripRecord {
                household_id: household_id.clone(),
                person_id: person(0),
                mode: Mode::Car,
                distance_km: car_share * e * 1000.0 / factors.factor(Mode::Car),
                weight: 1.0,
            });
            trips.push(TripRecord {
                household_id: household_id.clone(),
                person_id: person(1),
                mode: Mode::Transit,
                distance_km: (1.0 - car_share) * e * 1000.0 / factors.factor(Mode::Transit),
                weight: 1.0,
            });
            trips.push(TripRecord {
                household_id: household_id.clone(),
                person_id: person(2),
                mode: Mode::Foot,
                distance_km: 0.3 + 2.0 * rng.random::<f64>(),
                weight: 1.0,
            });
            households.push(HouseholdRecord {
                household_id,
                neighborhood_id: h.neighborhood_id.clone(),
                income,
                size,
                member_ages,
                uni_degrees_over25: uni,
                cars,
                bikes,
                driving_licenses_adults: licenses,
                transit_subscriptions: subs,
                weight: 1.0,
            });
        }
        truth.push(TruthRow {
            neighborhood_id: h.neighborhood_id.clone(),
            theta,
            treatment: t[i],
            total_effect,
            outcome_mean: outcome_sum / n_h as f64,
            urbanity: u,
        });
    }

    let planned = planned_units(spec, &g, &mut rng);
    SyntheticCity {
        neighborhoods: g.hoods,
        households,
        trips,
        pois: g.pois,
        gtfs: g.gtfs,
        elections,
        planned,
        truth,
    }
}

/// Plan concentrated on the outskirts, summing to `planned_units`.
fn planned_units(spec: &CitySpec, g: &Geography, rng: &mut ChaCha8Rng) -> Vec<PlannedUnits> {
    let k = spec.planned_targets.min(g.hoods.len());
    if k == 0 || spec.planned_units == 0 {
        return Vec::new();
    }
    let mut keyed: Vec<(f64, usize)> = (0..g.hoods.len())
        .map(|i| {
            let w = (1.0 - g.urbanity[i]).powi(2).max(1e-9);
            (rng.random::<f64>().powf(1.0 / w), i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let chosen: Vec<usize> = keyed[..k].iter().map(|&(_, i)| i).collect();
    let raw: Vec<f64> = chosen.iter().map(|_| 1.0 + 3.0 * rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let mut units: Vec<u64> = raw.iter().map(|r| (r / total * spec.planned_units as f64).floor() as u64).collect();
    let short = spec.planned_units - units.iter().sum::<u64>();
    for u in units.iter_mut().take(short as usize) {
        *u += 1;
    }
    let mut out: Vec<PlannedUnits> = chosen
        .iter()
        .zip(units)
        .map(|(&i, units)| PlannedUnits {
            neighborhood_id: g.hoods[i].neighborhood_id.clone(),
            units,
        })
        .collect();
    out.sort_by(|a, b| a.neighborhood_id.cmp(&b.neighborhood_id));
    out
}

pub fn write_truth_csv<W: std::io::Write>(out: W, truth: &[TruthRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["neighborhood_id".to_string(), "total_effect".into(), "outcome_mean".into(), "urbanity".into()];
    header.extend(BUILT_ENV_NAMES.iter().map(|n| format!("theta_{n}")));
    header.extend(BUILT_ENV_NAMES.iter().map(|n| format!("t_{n}")));
    w.write_record(&header)?;
    for r in truth {
        let mut rec = vec![
            r.neighborhood_id.clone(),
            r.total_effect.to_string(),
            r.outcome_mean.to_string(),
            r.urbanity.to_string(),
        ];
        rec.extend(r.theta.iter().map(|v| v.to_string()));
        rec.extend(r.treatment.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth_csv<R: std::io::Read>(input: R) -> Result<Vec<TruthRow>, String> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let num = |i: usize| -> Result<f64, String> {
            rec.get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| format!("truth row {}: column {i} is not a number", out.len() + 1))
        };
        let mut theta = [0.0; 8];
        let mut treatment = [0.0; 8];
        for j in 0..8 {
            theta[j] = num(4 + j)?;
            treatment[j] = num(12 + j)?;
        }
        out.push(TruthRow {
            neighborhood_id: rec.get(0).unwrap_or_default().to_string(),
            total_effect: num(1)?,
            outcome_mean: num(2)?,
            urbanity: num(3)?,
            theta,
            treatment,
        });
    }
    Ok(out)
}

impl SyntheticCity {
    /// Writes the ingest fixture directory plus `truth.csv`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let create = |name: &str| File::create(dir.join(name)).map(BufWriter::new);
        let io = |e: csv::Error| std::io::Error::other(e.to_string());
        write_neighborhoods(create("neighborhoods.geojson")?, &self.neighborhoods, None)?;
        write_households(create("households.csv")?, &self.households).map_err(io)?;
        write_trips(create("trips.csv")?, &self.trips).map_err(io)?;
        write_pois(create("pois.csv")?, &self.pois).map_err(io)?;
        write_elections(create("elections.csv")?, &self.elections).map_err(io)?;
        write_planned_units(create("planned_units.csv")?, &self.planned).map_err(io)?;
        write_truth_csv(create("truth.csv")?, &self.truth).map_err(io)?;
        write_gtfs(&dir.join("gtfs"), &self.gtfs)
    }
}
