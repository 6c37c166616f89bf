//! Household → neighborhood aggregation of the outcome and the confounders.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::emissions::{household_daily_emissions, EmissionFactorTable};
use crate::ingest::{HouseholdRecord, TripRecord};

pub const CONFOUNDER_NAMES: [&str; 9] = [
    "income",
    "hh_size",
    "age",
    "uni_share",
    "car_ownership",
    "bike_ownership",
    "driving_license",
    "transit_subscription",
    "green_share",
];

/// Socio-demographics and travel-attitude proxies of one neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfounderVector {
    /// €/month, mean over households
    pub income: f64,
    /// persons per household
    pub hh_size: f64,
    /// mean age of residents older than 18
    pub age: f64,
    /// share of residents older than 25 holding a university degree
    pub uni_share: f64,
    /// cars per household
    pub car_ownership: f64,
    /// bikes per person
    pub bike_ownership: f64,
    /// share of adults with a driving license
    pub driving_license: f64,
    /// share of persons with a transit subscription
    pub transit_subscription: f64,
    pub green_share: f64,
}

impl ConfounderVector {
    pub fn to_array(&self) -> [f64; 9] {
        [
            self.income,
            self.hh_size,
            self.age,
            self.uni_share,
            self.car_ownership,
            self.bike_ownership,
            self.driving_license,
            self.transit_subscription,
            self.green_share,
        ]
    }

    pub fn from_array(a: [f64; 9]) -> Self {
        Self {
            income: a[0],
            hh_size: a[1],
            age: a[2],
            uni_share: a[3],
            car_ownership: a[4],
            bike_ownership: a[5],
            driving_license: a[6],
            transit_subscription: a[7],
            green_share: a[8],
        }
    }
}

/// Trips grouped by household id.
#[derive(Debug, Clone, Default)]
pub struct TripIndex {
    by_household: BTreeMap<String, Vec<TripRecord>>,
}

impl TripIndex {
    pub fn new(trips: &[TripRecord]) -> Self {
        let mut by_household: BTreeMap<String, Vec<TripRecord>> = BTreeMap::new();
        for t in trips {
            by_household
                .entry(t.household_id.clone())
                .or_default()
                .push(t.clone());
        }
        for v in by_household.values_mut() {
            v.sort_by(|a, b| {
                (a.person_id.as_str(), a.mode, a.distance_km.to_bits(), a.weight.to_bits())
                    .cmp(&(b.person_id.as_str(), b.mode, b.distance_km.to_bits(), b.weight.to_bits()))
            });
        }
        Self { by_household }
    }

    pub fn trips_of(&self, household_id: &str) -> &[TripRecord] {
        self.by_household
            .get(household_id)
            .map_or(&[][..], Vec::as_slice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub outcome_y: f64,
    pub confounders: ConfounderVector,
    pub n_households: usize,
}

/// Averages the households of `neighborhood_id`. With `weighted`, every
/// household counts with its survey weight; otherwise with weight one.
/// A household without trips is a zero-emission household-day. Sums run in
/// household-id order, so the result does not depend on input order.
pub fn aggregate_neighborhood(
    households: &[HouseholdRecord],
    trips: &TripIndex,
    factors: &EmissionFactorTable<f64>,
    neighborhood_id: &str,
    green_share: f64,
    weighted: bool,
) -> Result<Aggregate, FeatureError> {
    let mut members: Vec<&HouseholdRecord> = households
        .iter()
        .filter(|h| h.neighborhood_id == neighborhood_id)
        .collect();
    members.sort_by(|a, b| a.household_id.cmp(&b.household_id));
    if members.is_empty() {
        return Err(FeatureError::EmptyNeighborhood(neighborhood_id.to_string()));
    }
    #[derive(Default)]
    struct Sums {
        w: f64,
        emissions: f64,
        income: f64,
        size: f64,
        cars: f64,
        adult_age: f64,
        adults: f64,
        over25: f64,
        degrees: f64,
        persons: f64,
        bikes: f64,
        licenses: f64,
        subscriptions: f64,
    }
    let mut s = Sums::default();
    for h in &members {
        let w = if weighted { h.weight } else { 1.0 };
        let kg = household_daily_emissions(trips.trips_of(&h.household_id), factors)
            .map_err(FeatureError::Emissions)?;
        let adult_ages: f64 = h.member_ages.iter().filter(|&&a| a > 18).map(|&a| a as f64).sum();
        s.w += w;
        s.emissions += w * kg;
        s.income += w * h.income;
        s.size += w * h.size as f64;
        s.cars += w * h.cars as f64;
        s.adult_age += w * adult_ages;
        s.adults += w * h.adults() as f64;
        s.over25 += w * h.members_over_25() as f64;
        s.degrees += w * h.uni_degrees_over25 as f64;
        s.persons += w * h.size as f64;
        s.bikes += w * h.bikes as f64;
        s.licenses += w * h.driving_licenses_adults as f64;
        s.subscriptions += w * h.transit_subscriptions as f64;
    }
    if s.adults == 0.0 {
        return Err(FeatureError::NoAdults(neighborhood_id.to_string()));
    }
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    Ok(Aggregate {
        outcome_y: s.emissions / s.w,
        confounders: ConfounderVector {
            income: s.income / s.w,
            hh_size: s.size / s.w,
            age: s.adult_age / s.adults,
            uni_share: ratio(s.degrees, s.over25),
            car_ownership: s.cars / s.w,
            bike_ownership: ratio(s.bikes, s.persons),
            driving_license: s.licenses / s.adults,
            transit_subscription: ratio(s.subscriptions, s.persons),
            green_share,
        },
        n_households: members.len(),
    })
}
