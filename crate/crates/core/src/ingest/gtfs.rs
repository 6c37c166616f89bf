//! Minimal GTFS reader: stops, and the departures of one service day.
//!
//! Reads `stops.txt`, `trips.txt`, `calendar.txt`, `stop_times.txt` and, if
//! present, `calendar_dates.txt`. Referential integrity is checked eagerly and
//! the first violation is reported with its file and 1-based data row.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound (exclusive) on GTFS clock times, 48:00:00.
pub const MAX_GTFS_SECONDS: u32 = 172_800;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stop {
    pub stop_id: String,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Departure {
    pub stop_id: String,
    /// seconds since midnight of the service day, may exceed 24h
    pub departure_time: u32,
    /// weekday mask of the trip's service, bit 0 = Monday … bit 6 = Sunday
    pub service_days: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtfsBundle {
    pub service_date: NaiveDate,
    pub stops: Vec<Stop>,
    pub departures: Vec<Departure>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GtfsOptions {
    /// Service day to extract; defaults to the earliest Tuesday with service.
    pub service_date: Option<NaiveDate>,
}

#[derive(Debug, Error)]
pub enum GtfsError {
    #[error("missing GTFS file `{0}`")]
    MissingFile(String),
    #[error("{file} row {row}: reference to unknown {kind} `{id}`")]
    DanglingReference {
        file: String,
        row: usize,
        kind: String,
        id: String,
    },
    #[error("{file} row {row}: bad time `{value}`")]
    BadTimeFormat {
        file: String,
        row: usize,
        value: String,
    },
    #[error("{file} row {row}: {reason}")]
    MalformedRow {
        file: String,
        row: usize,
        reason: String,
    },
    #[error("no weekday service in the feed calendar")]
    NoServiceDay,
    #[error("{path}: {message}")]
    Read { path: PathBuf, message: String },
}

/// Parses `H:MM:SS` / `HH:MM:SS` into seconds; hours may run past 24.
pub fn parse_gtfs_time(s: &str) -> Option<u32> {
    let mut parts = s.trim().split(':');
    let h: u32 = parts.next()?.parse().ok()?;
    let m_raw = parts.next()?;
    let s_raw = parts.next()?;
    if parts.next().is_some() || m_raw.len() != 2 || s_raw.len() != 2 {
        return None;
    }
    let m: u32 = m_raw.parse().ok()?;
    let sec: u32 = s_raw.parse().ok()?;
    if m >= 60 || sec >= 60 {
        return None;
    }
    let total = h.checked_mul(3600)? + m * 60 + sec;
    (total < MAX_GTFS_SECONDS).then_some(total)
}

fn format_gtfs_time(t: u32) -> String {
    format!("{:02}:{:02}:{:02}", t / 3600, (t / 60) % 60, t % 60)
}

struct Table {
    file: String,
    columns: HashMap<String, usize>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn load(dir: &Path, name: &str, required: bool) -> Result<Option<Self>, GtfsError> {
        let path = dir.join(name);
        if !path.exists() {
            return if required {
                Err(GtfsError::MissingFile(name.to_string()))
            } else {
                Ok(None)
            };
        }
        let read_err = |e: &dyn std::fmt::Display| GtfsError::Read {
            path: path.clone(),
            message: e.to_string(),
        };
        let file = File::open(&path).map_err(|e| read_err(&e))?;
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(file);
        let columns = rdr
            .headers()
            .map_err(|e| read_err(&e))?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().trim_start_matches('\u{feff}').to_string(), i))
            .collect();
        let rows = rdr
            .records()
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| read_err(&e))?;
        Ok(Some(Self {
            file: name.to_string(),
            columns,
            rows,
        }))
    }

    fn col(&self, name: &str) -> Result<usize, GtfsError> {
        self.columns
            .get(name)
            .copied()
            .ok_or_else(|| GtfsError::MalformedRow {
                file: self.file.clone(),
                row: 0,
                reason: format!("missing column `{name}`"),
            })
    }

    fn get<'a>(&self, rec: &'a csv::StringRecord, col: usize) -> &'a str {
        rec.get(col).map(str::trim).unwrap_or("")
    }

    fn malformed(&self, row: usize, reason: String) -> GtfsError {
        GtfsError::MalformedRow {
            file: self.file.clone(),
            row,
            reason,
        }
    }
}

#[derive(Debug, Clone)]
struct Service {
    mask: u8,
    start: NaiveDate,
    end: NaiveDate,
}

fn weekday_bit(d: Weekday) -> u8 {
    1 << d.num_days_from_monday()
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y%m%d").ok()
}

pub fn parse_gtfs(dir: &Path, options: &GtfsOptions) -> Result<GtfsBundle, GtfsError> {
    let stops_t = Table::load(dir, "stops.txt", true)?.expect("required");
    let trips_t = Table::load(dir, "trips.txt", true)?.expect("required");
    let calendar_t = Table::load(dir, "calendar.txt", true)?.expect("required");
    let times_t = Table::load(dir, "stop_times.txt", true)?.expect("required");
    let dates_t = Table::load(dir, "calendar_dates.txt", false)?;

    let mut stops = Vec::with_capacity(stops_t.rows.len());
    let mut stop_ids = HashSet::new();
    {
        let (ci, cla, clo) = (stops_t.col("stop_id")?, stops_t.col("stop_lat")?, stops_t.col("stop_lon")?);
        for (i, rec) in stops_t.rows.iter().enumerate() {
            let row = i + 1;
            let id = stops_t.get(rec, ci).to_string();
            let coord = |c| stops_t.get(rec, c).parse::<f64>().ok().filter(|v| v.is_finite());
            let (Some(lat), Some(lon)) = (coord(cla), coord(clo)) else {
                return Err(stops_t.malformed(row, format!("stop `{id}` without valid coordinates")));
            };
            if !stop_ids.insert(id.clone()) {
                return Err(stops_t.malformed(row, format!("duplicate stop_id `{id}`")));
            }
            stops.push(Stop { stop_id: id, lat, lon });
        }
    }

    let mut services: HashMap<String, Service> = HashMap::new();
    {
        let days = ["monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"]
            .map(|d| calendar_t.col(d));
        let day_cols: Vec<usize> = days.into_iter().collect::<Result<_, _>>()?;
        let (cs, cst, cen) = (
            calendar_t.col("service_id")?,
            calendar_t.col("start_date")?,
            calendar_t.col("end_date")?,
        );
        for (i, rec) in calendar_t.rows.iter().enumerate() {
            let row = i + 1;
            let mut mask = 0u8;
            for (bit, &c) in day_cols.iter().enumerate() {
                match calendar_t.get(rec, c) {
                    "1" => mask |= 1 << bit,
                    "0" => {}
                    other => {
                        return Err(calendar_t.malformed(row, format!("weekday flag `{other}`")))
                    }
                }
            }
            let date = |c| {
                parse_date(calendar_t.get(rec, c))
                    .ok_or_else(|| calendar_t.malformed(row, "bad date".into()))
            };
            services.insert(
                calendar_t.get(rec, cs).to_string(),
                Service {
                    mask,
                    start: date(cst)?,
                    end: date(cen)?,
                },
            );
        }
    }

    // service_id -> (added dates, removed dates)
    let mut exceptions: HashMap<String, (HashSet<NaiveDate>, HashSet<NaiveDate>)> = HashMap::new();
    if let Some(t) = &dates_t {
        let (cs, cd, ce) = (t.col("service_id")?, t.col("date")?, t.col("exception_type")?);
        for (i, rec) in t.rows.iter().enumerate() {
            let row = i + 1;
            let date = parse_date(t.get(rec, cd)).ok_or_else(|| t.malformed(row, "bad date".into()))?;
            let entry = exceptions.entry(t.get(rec, cs).to_string()).or_default();
            match t.get(rec, ce) {
                "1" => entry.0.insert(date),
                "2" => entry.1.insert(date),
                other => return Err(t.malformed(row, format!("exception_type `{other}`"))),
            };
        }
    }

    let active_on = |sid: &str, d: NaiveDate| -> bool {
        if let Some((add, remove)) = exceptions.get(sid) {
            if remove.contains(&d) {
                return false;
            }
            if add.contains(&d) {
                return true;
            }
        }
        services
            .get(sid)
            .is_some_and(|s| d >= s.start && d <= s.end && s.mask & weekday_bit(d.weekday()) != 0)
    };

    let service_date = match options.service_date {
        Some(d) => d,
        None => default_service_date(&services, &exceptions).ok_or(GtfsError::NoServiceDay)?,
    };

    // trip_id -> active today, mask
    let mut trips: HashMap<String, (bool, u8)> = HashMap::new();
    {
        let (ct, cs) = (trips_t.col("trip_id")?, trips_t.col("service_id")?);
        for (i, rec) in trips_t.rows.iter().enumerate() {
            let row = i + 1;
            let sid = trips_t.get(rec, cs);
            if !services.contains_key(sid) && !exceptions.contains_key(sid) {
                return Err(GtfsError::DanglingReference {
                    file: trips_t.file.clone(),
                    row,
                    kind: "service_id".into(),
                    id: sid.to_string(),
                });
            }
            let mask = services.get(sid).map_or(0, |s| s.mask);
            trips.insert(
                trips_t.get(rec, ct).to_string(),
                (active_on(sid, service_date), mask),
            );
        }
    }

    let mut departures = Vec::new();
    {
        let t = &times_t;
        let (ct, ca, cd, cs) = (
            t.col("trip_id")?,
            t.col("arrival_time")?,
            t.col("departure_time")?,
            t.col("stop_id")?,
        );
        for (i, rec) in t.rows.iter().enumerate() {
            let row = i + 1;
            let trip_id = t.get(rec, ct);
            let Some(&(active, mask)) = trips.get(trip_id) else {
                return Err(GtfsError::DanglingReference {
                    file: t.file.clone(),
                    row,
                    kind: "trip_id".into(),
                    id: trip_id.to_string(),
                });
            };
            let stop_id = t.get(rec, cs);
            if !stop_ids.contains(stop_id) {
                return Err(GtfsError::DanglingReference {
                    file: t.file.clone(),
                    row,
                    kind: "stop_id".into(),
                    id: stop_id.to_string(),
                });
            }
            let raw = match t.get(rec, cd) {
                "" => t.get(rec, ca),
                v => v,
            };
            if raw.is_empty() {
                // untimed intermediate stop
                continue;
            }
            let secs = parse_gtfs_time(raw).ok_or_else(|| GtfsError::BadTimeFormat {
                file: t.file.clone(),
                row,
                value: raw.to_string(),
            })?;
            if active {
                departures.push(Departure {
                    stop_id: stop_id.to_string(),
                    departure_time: secs,
                    service_days: mask,
                });
            }
        }
    }

    Ok(GtfsBundle {
        service_date,
        stops,
        departures,
    })
}

fn default_service_date(
    services: &HashMap<String, Service>,
    exceptions: &HashMap<String, (HashSet<NaiveDate>, HashSet<NaiveDate>)>,
) -> Option<NaiveDate> {
    let removed = |sid: &str, d: &NaiveDate| exceptions.get(sid).is_some_and(|(_, r)| r.contains(d));
    let first_on = |wanted: Weekday| -> Option<NaiveDate> {
        let mut best: Option<NaiveDate> = None;
        for (sid, s) in services {
            if s.mask & weekday_bit(wanted) == 0 {
                continue;
            }
            let offset = (7 + wanted.num_days_from_monday() as i64
                - s.start.weekday().num_days_from_monday() as i64)
                % 7;
            let mut d = s.start + chrono::Duration::days(offset);
            while d <= s.end && removed(sid, &d) {
                d += chrono::Duration::days(7);
            }
            if d <= s.end && best.is_none_or(|b| d < b) {
                best = Some(d);
            }
        }
        for (add, _) in exceptions.values() {
            for d in add.iter().filter(|d| d.weekday() == wanted) {
                if best.is_none_or(|b| *d < b) {
                    best = Some(*d);
                }
            }
        }
        best
    };
    first_on(Weekday::Tue).or_else(|| {
        [Weekday::Wed, Weekday::Thu, Weekday::Mon, Weekday::Fri]
            .into_iter()
            .find_map(first_on)
    })
}

/// Writes `bundle` as a GTFS feed: one single-stop trip per departure, one
/// calendar service per distinct weekday mask, valid on the bundle's service
/// date only. Parsing the result with that service date yields `bundle`.
pub fn write_gtfs(dir: &Path, bundle: &GtfsBundle) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let to_io = |e: csv::Error| std::io::Error::other(e.to_string());
    let mut w = csv::Writer::from_path(dir.join("stops.txt")).map_err(to_io)?;
    w.write_record(["stop_id", "stop_name", "stop_lat", "stop_lon"]).map_err(to_io)?;
    for s in &bundle.stops {
        w.write_record([&s.stop_id, &s.stop_id, &s.lat.to_string(), &s.lon.to_string()])
            .map_err(to_io)?;
    }
    w.flush()?;

    let masks: BTreeMap<u8, String> = bundle
        .departures
        .iter()
        .map(|d| (d.service_days, format!("svc_{:07b}", d.service_days)))
        .collect();
    let date = bundle.service_date.format("%Y%m%d").to_string();
    let mut w = csv::Writer::from_path(dir.join("calendar.txt")).map_err(to_io)?;
    w.write_record([
        "service_id", "monday", "tuesday", "wednesday", "thursday", "friday", "saturday",
        "sunday", "start_date", "end_date",
    ])
    .map_err(to_io)?;
    for (mask, sid) in &masks {
        let mut rec = vec![sid.clone()];
        rec.extend((0..7).map(|b| ((mask >> b) & 1).to_string()));
        rec.push(date.clone());
        rec.push(date.clone());
        w.write_record(&rec).map_err(to_io)?;
    }
    w.flush()?;

    let today_bit = weekday_bit(bundle.service_date.weekday());
    let mut trips = csv::Writer::from_path(dir.join("trips.txt")).map_err(to_io)?;
    trips.write_record(["route_id", "service_id", "trip_id"]).map_err(to_io)?;
    let mut times = csv::Writer::from_path(dir.join("stop_times.txt")).map_err(to_io)?;
    times
        .write_record(["trip_id", "arrival_time", "departure_time", "stop_id", "stop_sequence"])
        .map_err(to_io)?;
    let mut dates = Vec::new();
    for (k, d) in bundle.departures.iter().enumerate() {
        let trip = format!("t{k}");
        trips.write_record(["r", &masks[&d.service_days], &trip]).map_err(to_io)?;
        let t = format_gtfs_time(d.departure_time);
        times.write_record([&trip, &t, &t, &d.stop_id, "1"]).map_err(to_io)?;
        if d.service_days & today_bit == 0 {
            dates.push(masks[&d.service_days].clone());
        }
    }
    trips.flush()?;
    times.flush()?;
    dates.sort();
    dates.dedup();
    if !dates.is_empty() {
        let mut f = File::create(dir.join("calendar_dates.txt"))?;
        writeln!(f, "service_id,date,exception_type")?;
        for sid in dates {
            writeln!(f, "{sid},{date},1")?;
        }
    }
    Ok(())
}
