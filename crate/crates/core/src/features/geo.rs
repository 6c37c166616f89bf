use serde::{Deserialize, Serialize};

/// Mean Earth radius (IUGG), km.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance between two (lat, lon) points in degrees.
pub fn haversine_km(p: (f64, f64), q: (f64, f64)) -> f64 {
    let (lat1, lon1) = (p.0.to_radians(), p.1.to_radians());
    let (lat2, lon2) = (q.0.to_radians(), q.1.to_radians());
    let dlat = lat2 - lat1;
    let dlon = lon2 - lon1;
    let a = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

/// Pedestrian access model: network detour over the great-circle distance at
/// a constant walking speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkModel {
    pub detour_factor: f64,
    pub speed_kmh: f64,
}

impl Default for WalkModel {
    fn default() -> Self {
        Self {
            detour_factor: 1.3,
            speed_kmh: 4.5,
        }
    }
}

impl WalkModel {
    pub fn minutes_for_km(&self, km: f64) -> f64 {
        km * self.detour_factor / self.speed_kmh * 60.0
    }

    pub fn minutes(&self, from: (f64, f64), to: (f64, f64)) -> f64 {
        self.minutes_for_km(haversine_km(from, to))
    }

    /// Inverse of [`minutes_for_km`](Self::minutes_for_km).
    pub fn km_for_minutes(&self, minutes: f64) -> f64 {
        minutes / 60.0 * self.speed_kmh / self.detour_factor
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent route: spherical law of cosines.
    fn cosine_law_km(p: (f64, f64), q: (f64, f64)) -> f64 {
        let (a, b) = (p.0.to_radians(), q.0.to_radians());
        let dl = (q.1 - p.1).to_radians();
        (a.sin() * b.sin() + a.cos() * b.cos() * dl.cos()).clamp(-1.0, 1.0).acos() * EARTH_RADIUS_KM
    }

    #[test]
    fn zero_for_identical_points() {
        assert_eq!(haversine_km((52.52, 13.405), (52.52, 13.405)), 0.0);
    }

    #[test]
    fn tenth_degree_of_longitude_at_52_5_north() {
        let d = haversine_km((52.5, 13.4), (52.5, 13.5));
        assert!((d - 6.77).abs() < 0.01, "{d}");
        assert!((d - cosine_law_km((52.5, 13.4), (52.5, 13.5))).abs() < 1e-6);
    }

    #[test]
    fn symmetric() {
        let p = (52.4, 13.1);
        let q = (52.6, 13.7);
        assert_eq!(haversine_km(p, q), haversine_km(q, p));
    }

    #[test]
    fn walk_model_roundtrip() {
        let w = WalkModel::default();
        let km = w.km_for_minutes(5.0);
        assert!((w.minutes_for_km(km) - 5.0).abs() < 1e-12);
    }
}
