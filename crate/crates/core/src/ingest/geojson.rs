//! Neighborhood FeatureCollection reader/writer.
//!
//! Each feature's `properties` carry the raw neighborhood attributes; the
//! geometry may be a `Point` (the centroid) or a `Polygon`/`MultiPolygon`,
//! which is reduced to its area-weighted centroid and planar area.
//! Coordinates follow GeoJSON order `[lon, lat]`. Explicit `centroid_lat` /
//! `centroid_lon` properties take precedence over the geometry.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{IngestError, Parsed, RecordError};
use crate::features::EARTH_RADIUS_KM;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodRaw {
    pub neighborhood_id: String,
    /// (lat, lon) in degrees
    pub centroid: (f64, f64),
    pub population: u64,
    pub built_up_area_km2: f64,
    pub mixed_use_share: f64,
    pub expressway_km: f64,
    pub intersections: u64,
    /// May instead be supplied through `elections.csv`.
    pub green_vote_share: Option<f64>,
    /// (lat, lon) of rail stations serving the neighborhood
    pub rail_station_centroids: Vec<(f64, f64)>,
    pub inside_or_on_ringbahn: bool,
    /// Original geometry, kept for map exports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometry: Option<Value>,
}

impl NeighborhoodRaw {
    fn validate(&self) -> Result<(), String> {
        if !(self.built_up_area_km2.is_finite() && self.built_up_area_km2 > 0.0) {
            return Err(format!(
                "built_up_area_km2 {} must be positive",
                self.built_up_area_km2
            ));
        }
        let share = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} {v} outside [0, 1]"))
            }
        };
        share("mixed_use_share", self.mixed_use_share)?;
        if let Some(g) = self.green_vote_share {
            share("green_vote_share", g)?;
        }
        if !(self.expressway_km.is_finite() && self.expressway_km >= 0.0) {
            return Err(format!("expressway_km {} must be non-negative", self.expressway_km));
        }
        let (lat, lon) = self.centroid;
        if !(lat.abs() <= 90.0 && lon.abs() <= 180.0) {
            return Err(format!("centroid ({lat}, {lon}) is not a valid coordinate"));
        }
        Ok(())
    }
}

pub fn read_neighborhoods<R: Read>(
    mut input: R,
    path: &Path,
) -> Result<Parsed<NeighborhoodRaw>, IngestError> {
    let format = |message: String| IngestError::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut text = String::new();
    input
        .read_to_string(&mut text)
        .map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| format(e.to_string()))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(format("expected a GeoJSON FeatureCollection".into()));
    }
    let features = doc
        .get("features")
        .and_then(Value::as_array)
        .ok_or_else(|| format("FeatureCollection without `features` array".into()))?;

    let mut out = Parsed {
        records: Vec::new(),
        errors: Vec::new(),
        rows: features.len(),
    };
    let mut seen = HashSet::new();
    for (i, feature) in features.iter().enumerate() {
        let row = i + 1;
        match parse_feature(feature, row) {
            Ok(n) => {
                if seen.insert(n.neighborhood_id.clone()) {
                    out.records.push(n);
                } else {
                    out.errors.push(RecordError::Invalid {
                        row,
                        reason: format!("duplicate neighborhood_id `{}`", n.neighborhood_id),
                    });
                }
            }
            Err(e) => out.errors.push(e),
        }
    }
    Ok(out)
}

pub fn parse_neighborhoods(path: &Path) -> Result<Parsed<NeighborhoodRaw>, IngestError> {
    let f = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_neighborhoods(std::io::BufReader::new(f), path)
}

fn parse_feature(feature: &Value, row: usize) -> Result<NeighborhoodRaw, RecordError> {
    let bad = |reason: String| RecordError::MalformedRow { row, reason };
    let props = feature
        .get("properties")
        .and_then(Value::as_object)
        .ok_or_else(|| bad("feature without properties".into()))?;

    let id = match props.get("neighborhood_id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        _ => return Err(bad("missing neighborhood_id".into())),
    };
    let geometry = feature.get("geometry").filter(|g| !g.is_null()).cloned();
    let shape = match &geometry {
        Some(g) => Some(reduce_geometry(g).map_err(|reason| RecordError::MalformedGeometry { row, reason })?),
        None => None,
    };

    let f64_prop = |name: &str| -> Result<Option<f64>, RecordError> {
        match props.get(name) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| bad(format!("property `{name}` is not a number"))),
        }
    };
    let u64_prop = |name: &str| -> Result<u64, RecordError> {
        props
            .get(name)
            .and_then(Value::as_u64)
            .ok_or_else(|| bad(format!("property `{name}` must be a non-negative integer")))
    };
    let required = |name: &str| -> Result<f64, RecordError> {
        f64_prop(name)?.ok_or_else(|| bad(format!("missing property `{name}`")))
    };

    let centroid = match (f64_prop("centroid_lat")?, f64_prop("centroid_lon")?) {
        (Some(lat), Some(lon)) => (lat, lon),
        _ => shape
            .map(|s| s.centroid)
            .ok_or_else(|| bad("no geometry and no centroid_lat/centroid_lon".into()))?,
    };
    let built_up_area_km2 = match f64_prop("built_up_area_km2")? {
        Some(a) => a,
        None => shape
            .and_then(|s| s.area_km2)
            .ok_or_else(|| bad("missing built_up_area_km2 and no polygon to measure".into()))?,
    };

    let rail_station_centroids = match props.get("rail_station_centroids") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|p| match p.as_array().map(|a| a.as_slice()) {
                Some([lat, lon]) => match (lat.as_f64(), lon.as_f64()) {
                    (Some(lat), Some(lon)) => Ok((lat, lon)),
                    _ => Err(bad("rail station coordinate not numeric".into())),
                },
                _ => Err(bad("rail station must be a [lat, lon] pair".into())),
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(bad("rail_station_centroids must be an array".into())),
    };
    let inside_or_on_ringbahn = match props.get("inside_or_on_ringbahn") {
        None | Some(Value::Null) => false,
        Some(Value::Bool(b)) => *b,
        Some(_) => return Err(bad("inside_or_on_ringbahn must be a boolean".into())),
    };

    let n = NeighborhoodRaw {
        neighborhood_id: id,
        centroid,
        population: u64_prop("population")?,
        built_up_area_km2,
        mixed_use_share: required("mixed_use_share")?,
        expressway_km: required("expressway_km")?,
        intersections: u64_prop("intersections")?,
        green_vote_share: f64_prop("green_vote_share")?,
        rail_station_centroids,
        inside_or_on_ringbahn,
        geometry,
    };
    n.validate()
        .map_err(|reason| RecordError::Invalid { row, reason })?;
    Ok(n)
}

#[derive(Debug, Clone, Copy)]
struct Shape {
    centroid: (f64, f64),
    area_km2: Option<f64>,
}

fn position(v: &Value) -> Result<(f64, f64), String> {
    match v.as_array().map(|a| a.as_slice()) {
        Some([lon, lat, ..]) => match (lon.as_f64(), lat.as_f64()) {
            (Some(lon), Some(lat)) => Ok((lon, lat)),
            _ => Err("position coordinates must be numbers".into()),
        },
        _ => Err("position must have at least two coordinates".into()),
    }
}

fn ring(v: &Value) -> Result<Vec<(f64, f64)>, String> {
    let pts = v
        .as_array()
        .ok_or("linear ring must be an array")?
        .iter()
        .map(position)
        .collect::<Result<Vec<_>, _>>()?;
    if pts.len() < 4 {
        return Err(format!("linear ring has {} positions, needs at least 4", pts.len()));
    }
    if pts.first() != pts.last() {
        return Err("linear ring is not closed".into());
    }
    Ok(pts)
}

/// Signed planar area (deg²) and area-weighted centroid (lon, lat) of a ring.
fn ring_moments(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for w in pts.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        let cross = x0 * y1 - x1 * y0;
        a += cross;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    (a / 2.0, cx / 6.0, cy / 6.0)
}

fn polygon_moments(rings: &Value) -> Result<(f64, f64, f64), String> {
    let rings = rings.as_array().ok_or("polygon must be an array of rings")?;
    if rings.is_empty() {
        return Err("polygon without rings".into());
    }
    let (mut a, mut mx, mut my) = (0.0, 0.0, 0.0);
    for (k, r) in rings.iter().enumerate() {
        let (ra, rx, ry) = ring_moments(&ring(r)?);
        // exterior counts positive, holes negative, whatever the winding
        let sign = if k == 0 { ra.signum() } else { -ra.signum() };
        a += sign * ra;
        mx += sign * rx;
        my += sign * ry;
    }
    Ok((a, mx, my))
}

fn reduce_geometry(g: &Value) -> Result<Shape, String> {
    let kind = g.get("type").and_then(Value::as_str).ok_or("geometry without type")?;
    let coords = g.get("coordinates").ok_or("geometry without coordinates")?;
    let (a, mx, my) = match kind {
        "Point" => {
            let (lon, lat) = position(coords)?;
            return Ok(Shape {
                centroid: (lat, lon),
                area_km2: None,
            });
        }
        "Polygon" => polygon_moments(coords)?,
        "MultiPolygon" => {
            let polys = coords.as_array().ok_or("multipolygon must be an array")?;
            if polys.is_empty() {
                return Err("empty multipolygon".into());
            }
            let mut acc = (0.0, 0.0, 0.0);
            for p in polys {
                let (a, x, y) = polygon_moments(p)?;
                acc = (acc.0 + a, acc.1 + x, acc.2 + y);
            }
            acc
        }
        other => return Err(format!("unsupported geometry type `{other}`")),
    };
    if a.abs() == 0.0 {
        return Err("polygon has zero area".into());
    }
    let (lon, lat) = (mx / a, my / a);
    let deg = std::f64::consts::PI / 180.0;
    let km_per_deg = EARTH_RADIUS_KM * deg;
    let area_km2 = (a * km_per_deg * km_per_deg * (lat * deg).cos()).abs();
    Ok(Shape {
        centroid: (lat, lon),
        area_km2: Some(area_km2),
    })
}

/// Writes a FeatureCollection that [`read_neighborhoods`] parses back to the
/// same records; `extra` properties (e.g. effect estimates) are merged into
/// each feature by position.
pub fn write_neighborhoods<W: Write>(
    out: W,
    neighborhoods: &[NeighborhoodRaw],
    extra: Option<&[Map<String, Value>]>,
) -> serde_json::Result<()> {
    let features: Vec<Value> = neighborhoods
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let mut props = Map::new();
            props.insert("neighborhood_id".into(), json!(n.neighborhood_id));
            props.insert("centroid_lat".into(), json!(n.centroid.0));
            props.insert("centroid_lon".into(), json!(n.centroid.1));
            props.insert("population".into(), json!(n.population));
            props.insert("built_up_area_km2".into(), json!(n.built_up_area_km2));
            props.insert("mixed_use_share".into(), json!(n.mixed_use_share));
            props.insert("expressway_km".into(), json!(n.expressway_km));
            props.insert("intersections".into(), json!(n.intersections));
            if let Some(g) = n.green_vote_share {
                props.insert("green_vote_share".into(), json!(g));
            }
            props.insert(
                "rail_station_centroids".into(),
                json!(n
                    .rail_station_centroids
                    .iter()
                    .map(|&(lat, lon)| vec![lat, lon])
                    .collect::<Vec<_>>()),
            );
            props.insert("inside_or_on_ringbahn".into(), json!(n.inside_or_on_ringbahn));
            if let Some(extra) = extra.and_then(|e| e.get(i)) {
                for (k, v) in extra {
                    props.insert(k.clone(), v.clone());
                }
            }
            let geometry = n.geometry.clone().unwrap_or_else(|| {
                json!({"type": "Point", "coordinates": [n.centroid.1, n.centroid.0]})
            });
            json!({"type": "Feature", "properties": props, "geometry": geometry})
        })
        .collect();
    serde_json::to_writer(out, &json!({"type": "FeatureCollection", "features": features}))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(lon: f64, lat: f64, d: f64) -> Value {
        json!({"type": "Polygon", "coordinates": [[
            [lon, lat], [lon + d, lat], [lon + d, lat + d], [lon, lat + d], [lon, lat]
        ]]})
    }

    fn feature(id: &str, geometry: Value, extra: Value) -> Value {
        let mut props = json!({
            "neighborhood_id": id,
            "population": 20000,
            "built_up_area_km2": 4.0,
            "mixed_use_share": 0.3,
            "expressway_km": 3.0,
            "intersections": 400,
            "green_vote_share": 0.2,
            "rail_station_centroids": [[52.5, 13.4]],
            "inside_or_on_ringbahn": true
        });
        for (k, v) in extra.as_object().unwrap() {
            props[k] = v.clone();
        }
        json!({"type": "Feature", "properties": props, "geometry": geometry})
    }

    fn parse(features: Vec<Value>) -> Parsed<NeighborhoodRaw> {
        let doc = json!({"type": "FeatureCollection", "features": features}).to_string();
        read_neighborhoods(doc.as_bytes(), Path::new("n.geojson")).unwrap()
    }

    #[test]
    fn polygon_reduced_to_centroid_and_area() {
        let p = parse(vec![feature(
            "10115",
            square(13.0, 52.0, 0.02),
            json!({"built_up_area_km2": null}),
        )]);
        assert!(p.is_clean(), "{:?}", p.errors);
        let n = &p.records[0];
        assert!((n.centroid.0 - 52.01).abs() < 1e-9);
        assert!((n.centroid.1 - 13.01).abs() < 1e-9);
        // 0.02° × 0.02° at 52° N ≈ 2.224 km × 1.369 km
        assert!((n.built_up_area_km2 - 3.045).abs() < 0.01, "{}", n.built_up_area_km2);
    }

    #[test]
    fn short_ring_is_malformed_geometry() {
        let g = json!({"type": "Polygon", "coordinates": [[[13.0, 52.0], [13.1, 52.0], [13.0, 52.0]]]});
        let p = parse(vec![feature("1", g, json!({}))]);
        assert!(matches!(p.errors[0], RecordError::MalformedGeometry { row: 1, .. }));
    }

    #[test]
    fn shares_validated_and_duplicates_rejected() {
        let p = parse(vec![
            feature("1", square(13.0, 52.0, 0.01), json!({"mixed_use_share": 1.5})),
            feature("2", square(13.0, 52.0, 0.01), json!({})),
            feature("2", square(13.0, 52.0, 0.01), json!({})),
            feature("3", square(13.0, 52.0, 0.01), json!({"built_up_area_km2": 0.0})),
        ]);
        assert_eq!(p.records.len(), 1);
        assert_eq!(p.errors.len(), 3);
        assert_eq!(p.records.len() + p.errors.len(), p.rows);
    }

    #[test]
    fn not_a_feature_collection() {
        let err = read_neighborhoods(br#"{"type":"Feature"}"#.as_slice(), Path::new("n")).unwrap_err();
        assert!(matches!(err, IngestError::Format { .. }));
    }

    #[test]
    fn writer_roundtrips() {
        let p = parse(vec![
            feature("a", square(13.3, 52.4, 0.013), json!({})),
            feature("b", json!({"type": "Point", "coordinates": [13.5, 52.6]}), json!({"green_vote_share": null})),
        ]);
        assert!(p.is_clean());
        let mut buf = Vec::new();
        write_neighborhoods(&mut buf, &p.records, None).unwrap();
        let back = read_neighborhoods(buf.as_slice(), Path::new("n")).unwrap();
        assert_eq!(back.records, p.records);
    }
}
