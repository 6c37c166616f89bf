//! Life-cycle CO₂-equivalent emissions of surveyed trips.
//!
//! The factor table and the arithmetic are generic over any numeric type, so
//! the same code runs in `f64` for the pipeline and in exact rationals where
//! bit-for-bit accounting is wanted.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Mode, TripRecord};

#[derive(Debug, Error, PartialEq)]
pub enum EmissionsError {
    #[error("trips belong to more than one household: `{0}` and `{1}`")]
    MixedHouseholds(String, String),
    #[error("distance {0} is not representable")]
    Unrepresentable(f64),
    #[error("emission factor file: {0}")]
    FactorFile(String),
}

/// Grams CO₂e per person-km for each mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionFactorTable<T = f64> {
    factors: BTreeMap<Mode, T>,
}

impl<T: Num + Copy + FromPrimitive + PartialOrd> EmissionFactorTable<T> {
    /// Central ITF life-cycle estimates: car 162, moped 70, transit 65,
    /// bike 20, foot 0 g/pkm.
    pub fn itf() -> Self {
        let g = |v: u32| T::from_u32(v).expect("small integer representable");
        Self {
            factors: [
                (Mode::Car, g(162)),
                (Mode::Moped, g(70)),
                (Mode::Transit, g(65)),
                (Mode::Bike, g(20)),
                (Mode::Foot, g(0)),
            ]
            .into_iter()
            .collect(),
        }
    }

    /// Replaces the factors listed in `overrides`; every factor must be ≥ 0.
    pub fn with_overrides(mut self, overrides: &[(Mode, T)]) -> Result<Self, EmissionsError> {
        for &(mode, f) in overrides {
            if f < T::zero() {
                return Err(EmissionsError::FactorFile(format!(
                    "negative factor for {mode}"
                )));
            }
            self.factors.insert(mode, f);
        }
        Ok(self)
    }

    pub fn factor(&self, mode: Mode) -> T {
        self.factors[&mode]
    }
}

impl Default for EmissionFactorTable<f64> {
    fn default() -> Self {
        Self::itf()
    }
}

impl EmissionFactorTable<f64> {
    /// ITF defaults overridden by an `emission_factors.csv` stream with header
    /// `mode,factor_g_per_pkm`.
    pub fn from_override_csv<R: Read>(input: R) -> Result<Self, EmissionsError> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut overrides = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| EmissionsError::FactorFile(e.to_string()))?;
            let row = i + 1;
            let mode: Mode = rec
                .get(0)
                .unwrap_or("")
                .parse()
                .map_err(|_| EmissionsError::FactorFile(format!("row {row}: unknown mode")))?;
            let factor: f64 = rec
                .get(1)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|_| EmissionsError::FactorFile(format!("row {row}: bad factor")))?;
            overrides.push((mode, factor));
        }
        Self::itf().with_overrides(&overrides)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, EmissionsError> {
        match path {
            None => Ok(Self::itf()),
            Some(p) => {
                let f = std::fs::File::open(p)
                    .map_err(|e| EmissionsError::FactorFile(format!("{}: {e}", p.display())))?;
                Self::from_override_csv(f)
            }
        }
    }
}

/// Grams CO₂e of one trip: factor(mode) × distance.
pub fn trip_emissions<T>(trip: &TripRecord, factors: &EmissionFactorTable<T>) -> T
where
    T: Num + Copy + FromPrimitive + PartialOrd,
{
    let d = T::from_f64(trip.distance_km).expect("finite distance is representable");
    factors.factor(trip.mode) * d
}

/// kg CO₂e of one household-day.
pub fn household_daily_emissions<T>(
    trips: &[TripRecord],
    factors: &EmissionFactorTable<T>,
) -> Result<T, EmissionsError>
where
    T: Num + Copy + FromPrimitive + PartialOrd,
{
    if let Some(first) = trips.first() {
        if let Some(other) = trips.iter().find(|t| t.household_id != first.household_id) {
            return Err(EmissionsError::MixedHouseholds(
                first.household_id.clone(),
                other.household_id.clone(),
            ));
        }
    }
    let grams = trips
        .iter()
        .fold(T::zero(), |acc, t| acc + trip_emissions(t, factors));
    Ok(grams / T::from_u32(1000).expect("1000 representable"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn trip(mode: Mode, d: f64) -> TripRecord {
        TripRecord {
            household_id: "h".into(),
            person_id: "p".into(),
            mode,
            distance_km: d,
            weight: 1.0,
        }
    }

    #[test]
    fn table_values() {
        let t = EmissionFactorTable::<f64>::itf();
        assert_eq!(trip_emissions(&trip(Mode::Car, 10.0), &t), 1620.0);
        assert_eq!(trip_emissions(&trip(Mode::Foot, 5.0), &t), 0.0);
        assert_eq!(trip_emissions(&trip(Mode::Transit, 12.4), &t), 806.0);
    }

    #[test]
    fn household_sums() {
        let t = EmissionFactorTable::<f64>::itf();
        let kg = household_daily_emissions(&[trip(Mode::Car, 10.0), trip(Mode::Bike, 3.0)], &t).unwrap();
        assert!((kg - 1.68).abs() < 1e-12);
        assert_eq!(household_daily_emissions(&[], &t).unwrap(), 0.0);
        let kg = household_daily_emissions(&[trip(Mode::Moped, 2.0)], &t).unwrap();
        assert!((kg - 0.14).abs() < 1e-12);
    }

    #[test]
    fn exact_rational_accounting() {
        let t = EmissionFactorTable::<Ratio<i64>>::itf();
        let kg = household_daily_emissions(&[trip(Mode::Car, 10.0), trip(Mode::Bike, 3.0)], &t).unwrap();
        assert_eq!(kg, Ratio::new(168, 100));
    }

    #[test]
    fn mixed_households_rejected() {
        let mut b = trip(Mode::Car, 1.0);
        b.household_id = "other".into();
        let r = household_daily_emissions(&[trip(Mode::Car, 1.0), b], &EmissionFactorTable::<f64>::itf());
        assert_eq!(r, Err(EmissionsError::MixedHouseholds("h".into(), "other".into())));
    }

    #[test]
    fn override_csv() {
        let t = EmissionFactorTable::from_override_csv("mode,factor_g_per_pkm\ncar,100\n".as_bytes()).unwrap();
        assert_eq!(t.factor(Mode::Car), 100.0);
        assert_eq!(t.factor(Mode::Transit), 65.0);
        assert!(EmissionFactorTable::from_override_csv("mode,factor_g_per_pkm\ncar,-1\n".as_bytes()).is_err());
    }

    fn arb_trips() -> impl Strategy<Value = Vec<TripRecord>> {
        prop::collection::vec(
            (prop::sample::select(Mode::ALL.to_vec()), 0u32..2000).prop_map(|(m, tenths)| trip(m, tenths as f64 / 10.0)),
            0..12,
        )
    }

    proptest! {
        #[test]
        fn additive_exactly_in_rationals(a in arb_trips(), b in arb_trips()) {
            let t = EmissionFactorTable::<Ratio<i64>>::itf();
            let joined: Vec<_> = a.iter().chain(&b).cloned().collect();
            let lhs = household_daily_emissions(&joined, &t).unwrap();
            let rhs = household_daily_emissions(&a, &t).unwrap() + household_daily_emissions(&b, &t).unwrap();
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn additive_in_floats(a in arb_trips(), b in arb_trips()) {
            let t = EmissionFactorTable::<f64>::itf();
            let joined: Vec<_> = a.iter().chain(&b).cloned().collect();
            let lhs = household_daily_emissions(&joined, &t).unwrap();
            let rhs = household_daily_emissions(&a, &t).unwrap() + household_daily_emissions(&b, &t).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
        }

        #[test]
        fn monotone_in_distance(a in arb_trips(), idx in 0usize..12, extra in 0.0f64..50.0) {
            prop_assume!(!a.is_empty());
            let t = EmissionFactorTable::<f64>::itf();
            let mut longer = a.clone();
            let k = idx % a.len();
            longer[k].distance_km += extra;
            prop_assert!(household_daily_emissions(&longer, &t).unwrap() >= household_daily_emissions(&a, &t).unwrap());
        }
    }
}
