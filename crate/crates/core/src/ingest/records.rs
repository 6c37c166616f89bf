use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{IngestError, Parsed, RecordError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Car,
    Moped,
    Transit,
    Bike,
    Foot,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::Car, Mode::Moped, Mode::Transit, Mode::Bike, Mode::Foot];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Car => "car",
            Mode::Moped => "moped",
            Mode::Transit => "transit",
            Mode::Bike => "bike",
            Mode::Foot => "foot",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "car" => Ok(Mode::Car),
            "moped" => Ok(Mode::Moped),
            "transit" => Ok(Mode::Transit),
            "bike" => Ok(Mode::Bike),
            "foot" => Ok(Mode::Foot),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub household_id: String,
    pub person_id: String,
    pub mode: Mode,
    pub distance_km: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdRecord {
    pub household_id: String,
    pub neighborhood_id: String,
    /// €/month
    pub income: f64,
    pub size: u32,
    pub member_ages: Vec<u32>,
    pub uni_degrees_over25: u32,
    pub cars: u32,
    pub bikes: u32,
    pub driving_licenses_adults: u32,
    pub transit_subscriptions: u32,
    pub weight: f64,
}

impl HouseholdRecord {
    /// Members strictly older than 18.
    pub fn adults(&self) -> u32 {
        self.member_ages.iter().filter(|&&a| a > 18).count() as u32
    }

    pub fn members_over_25(&self) -> u32 {
        self.member_ages.iter().filter(|&&a| a > 25).count() as u32
    }

    fn validate(&self) -> Result<(), String> {
        if self.size == 0 {
            return Err("size must be >= 1".into());
        }
        if self.member_ages.len() != self.size as usize {
            return Err(format!(
                "member_ages lists {} people but size is {}",
                self.member_ages.len(),
                self.size
            ));
        }
        if !(self.income.is_finite() && self.income >= 0.0) {
            return Err(format!("income {} must be a non-negative number", self.income));
        }
        if self.driving_licenses_adults > self.adults() {
            return Err(format!(
                "driving_licenses_adults {} exceeds {} adult(s)",
                self.driving_licenses_adults,
                self.adults()
            ));
        }
        if self.uni_degrees_over25 > self.members_over_25() {
            return Err(format!(
                "uni_degrees_over25 {} exceeds {} member(s) over 25",
                self.uni_degrees_over25,
                self.members_over_25()
            ));
        }
        if self.transit_subscriptions > self.size {
            return Err(format!(
                "transit_subscriptions {} exceeds household size {}",
                self.transit_subscriptions, self.size
            ));
        }
        check_weight(self.weight)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoiCategory {
    Office,
    School,
    Kindergarten,
    University,
    Other,
}

impl PoiCategory {
    /// Categories counted by the POI density index.
    pub fn counts_toward_density(self) -> bool {
        !matches!(self, PoiCategory::Other)
    }

    fn as_str(self) -> &'static str {
        match self {
            PoiCategory::Office => "office",
            PoiCategory::School => "school",
            PoiCategory::Kindergarten => "kindergarten",
            PoiCategory::University => "university",
            PoiCategory::Other => "other",
        }
    }
}

impl FromStr for PoiCategory {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "office" => Ok(PoiCategory::Office),
            "school" => Ok(PoiCategory::School),
            "kindergarten" => Ok(PoiCategory::Kindergarten),
            "university" => Ok(PoiCategory::University),
            "other" => Ok(PoiCategory::Other),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiRecord {
    pub lat: f64,
    pub lon: f64,
    pub category: PoiCategory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.min_lat && lat <= self.max_lat && lon >= self.min_lon && lon <= self.max_lon
    }

    /// Smallest box around `points`, grown by `margin_deg` on every side.
    pub fn around(points: impl IntoIterator<Item = (f64, f64)>, margin_deg: f64) -> Option<Self> {
        let mut it = points.into_iter();
        let (lat, lon) = it.next()?;
        let mut b = BoundingBox {
            min_lat: lat,
            max_lat: lat,
            min_lon: lon,
            max_lon: lon,
        };
        for (lat, lon) in it {
            b.min_lat = b.min_lat.min(lat);
            b.max_lat = b.max_lat.max(lat);
            b.min_lon = b.min_lon.min(lon);
            b.max_lon = b.max_lon.max(lon);
        }
        b.min_lat -= margin_deg;
        b.max_lat += margin_deg;
        b.min_lon -= margin_deg;
        b.max_lon += margin_deg;
        Some(b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedUnits {
    pub neighborhood_id: String,
    pub units: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectionRecord {
    pub neighborhood_id: String,
    pub green_share: f64,
}

fn check_weight(w: f64) -> Result<(), String> {
    if w.is_finite() && w > 0.0 {
        Ok(())
    } else {
        Err(format!("weight {w} must be positive"))
    }
}

/// Column lookup over one CSV header.
struct Columns {
    index: HashMap<String, usize>,
}

impl Columns {
    fn new(headers: &csv::StringRecord) -> Self {
        let index = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().trim_start_matches('\u{feff}').to_string(), i))
            .collect();
        Self { index }
    }

    fn require(&self, name: &str, path: &Path) -> Result<usize, IngestError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| IngestError::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

fn field<'a>(rec: &'a csv::StringRecord, idx: usize, name: &str) -> Result<&'a str, String> {
    rec.get(idx)
        .map(str::trim)
        .ok_or_else(|| format!("missing field `{name}`"))
}

fn num<T: FromStr>(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T, String> {
    let raw = field(rec, idx, name)?;
    raw.parse::<T>()
        .map_err(|_| format!("field `{name}` has unparsable value `{raw}`"))
}

fn finite(rec: &csv::StringRecord, idx: usize, name: &str) -> Result<f64, String> {
    let v: f64 = num(rec, idx, name)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("field `{name}` is not finite"))
    }
}

fn optional_weight(rec: &csv::StringRecord, idx: Option<usize>) -> Result<f64, String> {
    match idx.and_then(|i| rec.get(i)).map(str::trim) {
        None | Some("") => Ok(1.0),
        Some(raw) => raw
            .parse::<f64>()
            .map_err(|_| format!("field `weight` has unparsable value `{raw}`")),
    }
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::None)
        .from_reader(r)
}

/// Runs `parse_row` over every data row of a CSV stream.
fn parse_csv<R: Read, T, C>(
    input: R,
    path: &Path,
    setup: impl FnOnce(&Columns) -> Result<C, IngestError>,
    mut parse_row: impl FnMut(&C, &csv::StringRecord, usize) -> Result<T, RecordError>,
) -> Result<Parsed<T>, IngestError> {
    let mut rdr = reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();
    let cols = setup(&Columns::new(&headers))?;
    let mut out = Parsed {
        records: Vec::new(),
        errors: Vec::new(),
        rows: 0,
    };
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        out.rows += 1;
        match rec {
            Err(e) => out.errors.push(RecordError::MalformedRow {
                row,
                reason: e.to_string(),
            }),
            Ok(rec) => match parse_row(&cols, &rec, row) {
                Ok(v) => out.records.push(v),
                Err(e) => out.errors.push(e),
            },
        }
    }
    Ok(out)
}

fn malformed(row: usize) -> impl Fn(String) -> RecordError {
    move |reason| RecordError::MalformedRow { row, reason }
}

/// `household_id,person_id,mode,distance_km[,weight]`
pub fn read_trips<R: Read>(input: R, path: &Path) -> Result<Parsed<TripRecord>, IngestError> {
    parse_csv(
        input,
        path,
        |c| {
            Ok((
                c.require("household_id", path)?,
                c.require("person_id", path)?,
                c.require("mode", path)?,
                c.require("distance_km", path)?,
                c.optional("weight"),
            ))
        },
        |cols, rec, row| {
            let &(h, p, m, d, w) = cols;
            let bad = malformed(row);
            let mode_raw = field(rec, m, "mode").map_err(&bad)?;
            let mode = mode_raw.parse::<Mode>().map_err(|_| RecordError::UnknownMode {
                row,
                value: mode_raw.to_string(),
            })?;
            let distance_km = finite(rec, d, "distance_km").map_err(&bad)?;
            if distance_km < 0.0 {
                return Err(RecordError::NegativeDistance {
                    row,
                    value: distance_km,
                });
            }
            let weight = optional_weight(rec, w).map_err(&bad)?;
            check_weight(weight).map_err(|reason| RecordError::Invalid { row, reason })?;
            Ok(TripRecord {
                household_id: field(rec, h, "household_id").map_err(&bad)?.to_string(),
                person_id: field(rec, p, "person_id").map_err(&bad)?.to_string(),
                mode,
                distance_km,
                weight,
            })
        },
    )
}

pub fn parse_trips(path: &Path) -> Result<Parsed<TripRecord>, IngestError> {
    read_trips(open(path)?, path)
}

pub fn write_trips<W: Write>(out: W, trips: &[TripRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["household_id", "person_id", "mode", "distance_km", "weight"])?;
    for t in trips {
        w.write_record([
            t.household_id.clone(),
            t.person_id.clone(),
            t.mode.to_string(),
            t.distance_km.to_string(),
            t.weight.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const HOUSEHOLD_COLUMNS: [&str; 10] = [
    "household_id",
    "neighborhood_id",
    "income",
    "size",
    "member_ages",
    "uni_degrees_over25",
    "cars",
    "bikes",
    "driving_licenses_adults",
    "transit_subscriptions",
];

/// `household_id,neighborhood_id,income,size,member_ages,uni_degrees_over25,
/// cars,bikes,driving_licenses_adults,transit_subscriptions[,weight]`, with
/// `member_ages` a `;`-separated list of ages in years.
pub fn read_households<R: Read>(
    input: R,
    path: &Path,
) -> Result<Parsed<HouseholdRecord>, IngestError> {
    parse_csv(
        input,
        path,
        |c| {
            let idx: Vec<usize> = HOUSEHOLD_COLUMNS
                .iter()
                .map(|name| c.require(name, path))
                .collect::<Result<_, _>>()?;
            Ok((idx, c.optional("weight")))
        },
        |(idx, weight_col), rec, row| {
            let bad = malformed(row);
            let ages_raw = field(rec, idx[4], "member_ages").map_err(&bad)?;
            let member_ages = if ages_raw.is_empty() {
                Vec::new()
            } else {
                ages_raw
                    .split(';')
                    .map(|a| {
                        a.trim()
                            .parse::<u32>()
                            .map_err(|_| format!("member age `{a}` is not a non-negative integer"))
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(&bad)?
            };
            let h = HouseholdRecord {
                household_id: field(rec, idx[0], "household_id").map_err(&bad)?.to_string(),
                neighborhood_id: field(rec, idx[1], "neighborhood_id")
                    .map_err(&bad)?
                    .to_string(),
                income: finite(rec, idx[2], "income").map_err(&bad)?,
                size: num(rec, idx[3], "size").map_err(&bad)?,
                member_ages,
                uni_degrees_over25: num(rec, idx[5], "uni_degrees_over25").map_err(&bad)?,
                cars: num(rec, idx[6], "cars").map_err(&bad)?,
                bikes: num(rec, idx[7], "bikes").map_err(&bad)?,
                driving_licenses_adults: num(rec, idx[8], "driving_licenses_adults")
                    .map_err(&bad)?,
                transit_subscriptions: num(rec, idx[9], "transit_subscriptions").map_err(&bad)?,
                weight: optional_weight(rec, *weight_col).map_err(&bad)?,
            };
            h.validate()
                .map_err(|reason| RecordError::Invalid { row, reason })?;
            Ok(h)
        },
    )
}

pub fn parse_households(path: &Path) -> Result<Parsed<HouseholdRecord>, IngestError> {
    read_households(open(path)?, path)
}

pub fn write_households<W: Write>(out: W, households: &[HouseholdRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = HOUSEHOLD_COLUMNS.to_vec();
    header.push("weight");
    w.write_record(&header)?;
    for h in households {
        let ages: Vec<String> = h.member_ages.iter().map(u32::to_string).collect();
        w.write_record([
            h.household_id.clone(),
            h.neighborhood_id.clone(),
            h.income.to_string(),
            h.size.to_string(),
            ages.join(";"),
            h.uni_degrees_over25.to_string(),
            h.cars.to_string(),
            h.bikes.to_string(),
            h.driving_licenses_adults.to_string(),
            h.transit_subscriptions.to_string(),
            h.weight.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `lat,lon,category`; rows outside `bbox` (when given) are rejected.
pub fn read_pois<R: Read>(
    input: R,
    path: &Path,
    bbox: Option<&BoundingBox>,
) -> Result<Parsed<PoiRecord>, IngestError> {
    parse_csv(
        input,
        path,
        |c| {
            Ok((
                c.require("lat", path)?,
                c.require("lon", path)?,
                c.require("category", path)?,
            ))
        },
        |cols, rec, row| {
            let &(la, lo, ca) = cols;
            let bad = malformed(row);
            let lat = finite(rec, la, "lat").map_err(&bad)?;
            let lon = finite(rec, lo, "lon").map_err(&bad)?;
            let raw = field(rec, ca, "category").map_err(&bad)?;
            let category = raw
                .parse::<PoiCategory>()
                .map_err(|_| bad(format!("unknown POI category `{raw}`")))?;
            if let Some(b) = bbox {
                if !b.contains(lat, lon) {
                    return Err(RecordError::Invalid {
                        row,
                        reason: format!("({lat}, {lon}) outside the study area"),
                    });
                }
            }
            Ok(PoiRecord { lat, lon, category })
        },
    )
}

pub fn parse_pois(path: &Path, bbox: Option<&BoundingBox>) -> Result<Parsed<PoiRecord>, IngestError> {
    read_pois(open(path)?, path, bbox)
}

pub fn write_pois<W: Write>(out: W, pois: &[PoiRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lat", "lon", "category"])?;
    for p in pois {
        w.write_record([p.lat.to_string(), p.lon.to_string(), p.category.as_str().to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `neighborhood_id,units`
pub fn read_planned_units<R: Read>(
    input: R,
    path: &Path,
) -> Result<Parsed<PlannedUnits>, IngestError> {
    parse_csv(
        input,
        path,
        |c| {
            Ok((c.require("neighborhood_id", path)?, c.require("units", path)?))
        },
        |cols, rec, row| {
            let &(id, u) = cols;
            let bad = malformed(row);
            Ok(PlannedUnits {
                neighborhood_id: field(rec, id, "neighborhood_id").map_err(&bad)?.to_string(),
                units: num(rec, u, "units").map_err(&bad)?,
            })
        },
    )
}

pub fn parse_planned_units(path: &Path) -> Result<Parsed<PlannedUnits>, IngestError> {
    read_planned_units(open(path)?, path)
}

pub fn write_planned_units<W: Write>(out: W, units: &[PlannedUnits]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["neighborhood_id", "units"])?;
    for u in units {
        w.write_record([u.neighborhood_id.clone(), u.units.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// `neighborhood_id,green_share`
pub fn read_elections<R: Read>(
    input: R,
    path: &Path,
) -> Result<Parsed<ElectionRecord>, IngestError> {
    parse_csv(
        input,
        path,
        |c| {
            Ok((c.require("neighborhood_id", path)?, c.require("green_share", path)?))
        },
        |cols, rec, row| {
            let &(id, g) = cols;
            let bad = malformed(row);
            let green_share = finite(rec, g, "green_share").map_err(&bad)?;
            if !(0.0..=1.0).contains(&green_share) {
                return Err(RecordError::Invalid {
                    row,
                    reason: format!("green_share {green_share} outside [0, 1]"),
                });
            }
            Ok(ElectionRecord {
                neighborhood_id: field(rec, id, "neighborhood_id").map_err(&bad)?.to_string(),
                green_share,
            })
        },
    )
}

pub fn parse_elections(path: &Path) -> Result<Parsed<ElectionRecord>, IngestError> {
    read_elections(open(path)?, path)
}

pub fn write_elections<W: Write>(out: W, records: &[ElectionRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["neighborhood_id", "green_share"])?;
    for r in records {
        w.write_record([r.neighborhood_id.clone(), r.green_share.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trips(csv: &str) -> Parsed<TripRecord> {
        read_trips(csv.as_bytes(), Path::new("trips.csv")).unwrap()
    }

    #[test]
    fn trip_rows_map_directly() {
        let p = trips("household_id,person_id,mode,distance_km\nh1,p1,car,10.0\nh1,p2,BIKE,2\n");
        assert!(p.is_clean());
        assert_eq!(
            p.records[0],
            TripRecord {
                household_id: "h1".into(),
                person_id: "p1".into(),
                mode: Mode::Car,
                distance_km: 10.0,
                weight: 1.0
            }
        );
        assert_eq!(p.records[1].mode, Mode::Bike);
    }

    #[test]
    fn trip_errors_are_itemised_by_row() {
        let p = trips(
            "household_id,person_id,mode,distance_km\nh1,p1,teleport,3\nh1,p1,bike,-2\nh1,p1,car,abc\nh1,p1,foot,1\n",
        );
        assert_eq!(p.rows, 4);
        assert_eq!(p.records.len() + p.errors.len(), p.rows);
        assert_eq!(
            p.errors[0],
            RecordError::UnknownMode {
                row: 1,
                value: "teleport".into()
            }
        );
        assert_eq!(p.errors[1], RecordError::NegativeDistance { row: 2, value: -2.0 });
        assert!(matches!(p.errors[2], RecordError::MalformedRow { row: 3, .. }));
    }

    #[test]
    fn missing_column_is_file_level() {
        let err = read_trips("household_id,mode\nh,car\n".as_bytes(), Path::new("t.csv")).unwrap_err();
        assert!(matches!(err, IngestError::MissingColumn { ref column, .. } if column == "person_id"));
    }

    const HH_HEADER: &str = "household_id,neighborhood_id,income,size,member_ages,uni_degrees_over25,cars,bikes,driving_licenses_adults,transit_subscriptions\n";

    #[test]
    fn household_license_invariant() {
        let csv = format!("{HH_HEADER}h1,10115,3000,3,10;40;50,1,1,2,2,1\nh2,10115,3000,2,10;40,0,1,1,2,0\n");
        let p = read_households(csv.as_bytes(), Path::new("h.csv")).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.records[0].adults(), 2);
        assert!(matches!(&p.errors[0], RecordError::Invalid { row: 2, reason } if reason.contains("driving_licenses_adults")));
    }

    #[test]
    fn household_age_list_must_match_size() {
        let csv = format!("{HH_HEADER}h1,10115,3000,2,40,0,0,0,0,0\n");
        let p = read_households(csv.as_bytes(), Path::new("h.csv")).unwrap();
        assert!(matches!(p.errors[0], RecordError::Invalid { row: 1, .. }));
    }

    #[test]
    fn planned_units_row() {
        let p = read_planned_units("neighborhood_id,units\n10115,1200\n".as_bytes(), Path::new("p.csv")).unwrap();
        assert_eq!(
            p.records,
            vec![PlannedUnits {
                neighborhood_id: "10115".into(),
                units: 1200
            }]
        );
    }

    #[test]
    fn pois_outside_bbox_rejected() {
        let bbox = BoundingBox {
            min_lat: 52.0,
            max_lat: 53.0,
            min_lon: 13.0,
            max_lon: 14.0,
        };
        let p = read_pois(
            "lat,lon,category\n52.5,13.4,office\n48.1,11.5,school\n52.5,13.4,museum\n".as_bytes(),
            Path::new("pois.csv"),
            Some(&bbox),
        )
        .unwrap();
        assert_eq!(p.records.len(), 1);
        assert!(matches!(p.errors[0], RecordError::Invalid { row: 2, .. }));
        assert!(matches!(p.errors[1], RecordError::MalformedRow { row: 3, .. }));
    }

    #[test]
    fn elections_share_bounds() {
        let p = read_elections("neighborhood_id,green_share\na,0.2\nb,1.4\n".as_bytes(), Path::new("e.csv")).unwrap();
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.errors.len(), 1);
    }

    fn arb_trip() -> impl Strategy<Value = TripRecord> {
        (
            "[a-z0-9]{1,6}",
            "[a-z0-9]{1,6}",
            prop::sample::select(Mode::ALL.to_vec()),
            0.0f64..1e4,
            0.01f64..100.0,
        )
            .prop_map(|(household_id, person_id, mode, distance_km, weight)| TripRecord {
                household_id,
                person_id,
                mode,
                distance_km,
                weight,
            })
    }

    fn arb_household() -> impl Strategy<Value = HouseholdRecord> {
        (
            "[a-z0-9]{1,6}",
            "[0-9]{5}",
            0.0f64..20_000.0,
            prop::collection::vec(0u32..100, 1..6),
            0u32..4,
            0u32..6,
            0.01f64..10.0,
        )
            .prop_map(|(household_id, neighborhood_id, income, ages, cars, bikes, weight)| {
                let mut h = HouseholdRecord {
                    household_id,
                    neighborhood_id,
                    income,
                    size: ages.len() as u32,
                    member_ages: ages,
                    uni_degrees_over25: 0,
                    cars,
                    bikes,
                    driving_licenses_adults: 0,
                    transit_subscriptions: 0,
                    weight,
                };
                h.uni_degrees_over25 = h.members_over_25();
                h.driving_licenses_adults = h.adults();
                h.transit_subscriptions = h.size / 2;
                h
            })
    }

    proptest! {
        #[test]
        fn trips_roundtrip(records in prop::collection::vec(arb_trip(), 0..20)) {
            let mut buf = Vec::new();
            write_trips(&mut buf, &records).unwrap();
            let back = read_trips(buf.as_slice(), Path::new("t.csv")).unwrap();
            prop_assert!(back.is_clean());
            prop_assert_eq!(back.records, records);
        }

        #[test]
        fn households_roundtrip(records in prop::collection::vec(arb_household(), 0..20)) {
            let mut buf = Vec::new();
            write_households(&mut buf, &records).unwrap();
            let back = read_households(buf.as_slice(), Path::new("h.csv")).unwrap();
            prop_assert!(back.is_clean());
            prop_assert_eq!(back.records, records);
        }

        #[test]
        fn parsing_is_total(lines in prop::collection::vec("[a-z0-9,.-]{0,24}", 0..30)) {
            let mut csv = String::from("household_id,person_id,mode,distance_km\n");
            for l in &lines {
                // empty lines are skipped by the csv reader and are not rows
                if !l.is_empty() {
                    csv.push_str(l);
                    csv.push('\n');
                }
            }
            let p = read_trips(csv.as_bytes(), Path::new("t.csv")).unwrap();
            prop_assert_eq!(p.records.len() + p.errors.len(), p.rows);
        }
    }
}
