//! Parsers for the pipeline's input files.
//!
//! CSV parsers are total: every data row yields either a record or an
//! itemised [`RecordError`] carrying its 1-based data-row number, so
//! `records.len() + errors.len() == rows`. File-level problems (missing file,
//! missing column, unreadable bytes) are reported as [`IngestError`].

mod geojson;
mod gtfs;
mod records;

pub use geojson::{parse_neighborhoods, read_neighborhoods, write_neighborhoods, NeighborhoodRaw};
pub use gtfs::{
    parse_gtfs, parse_gtfs_time, write_gtfs, Departure, GtfsBundle, GtfsError, GtfsOptions, Stop,
};
pub use records::{
    parse_elections, parse_households, parse_planned_units, parse_pois, parse_trips,
    read_elections, read_households, read_planned_units, read_pois, read_trips, write_households,
    write_elections, write_planned_units, write_pois, write_trips, BoundingBox, ElectionRecord, HouseholdRecord,
    Mode, PlannedUnits, PoiCategory, PoiRecord, TripRecord,
};

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

/// A rejected input row. `row` is the 1-based data row (header excluded) or
/// the 1-based feature index for GeoJSON.
#[derive(Debug, Clone, PartialEq, Error, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RecordError {
    #[error("row {row}: unknown mode `{value}`")]
    UnknownMode { row: usize, value: String },
    #[error("row {row}: negative distance {value}")]
    NegativeDistance { row: usize, value: f64 },
    #[error("row {row}: malformed row: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("row {row}: validation failed: {reason}")]
    Invalid { row: usize, reason: String },
    #[error("feature {row}: malformed geometry: {reason}")]
    MalformedGeometry { row: usize, reason: String },
}

impl RecordError {
    pub fn row(&self) -> usize {
        match self {
            RecordError::UnknownMode { row, .. }
            | RecordError::NegativeDistance { row, .. }
            | RecordError::MalformedRow { row, .. }
            | RecordError::Invalid { row, .. }
            | RecordError::MalformedGeometry { row, .. } => *row,
        }
    }
}

/// Outcome of parsing one file.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub records: Vec<T>,
    pub errors: Vec<RecordError>,
    pub rows: usize,
}

impl<T> Parsed<T> {
    pub fn is_clean(&self) -> bool {
        self.errors.is_empty()
    }

    /// Records if every row parsed, otherwise the itemised errors.
    pub fn into_result(self, path: &Path) -> Result<Vec<T>, IngestError> {
        if self.errors.is_empty() {
            Ok(self.records)
        } else {
            Err(IngestError::Rows {
                path: path.to_path_buf(),
                errors: self.errors,
            })
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: {} invalid row(s), first: {}", errors.len(), errors[0])]
    Rows {
        path: PathBuf,
        errors: Vec<RecordError>,
    },
}

impl IngestError {
    pub fn path(&self) -> &Path {
        match self {
            IngestError::Io { path, .. }
            | IngestError::Format { path, .. }
            | IngestError::MissingColumn { path, .. }
            | IngestError::Rows { path, .. } => path,
        }
    }
}
