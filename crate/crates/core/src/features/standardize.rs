//! Z-standardization, direction alignment and treatment encoding.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::FeatureError;
use crate::scalar::Scalar;
use crate::stats;

/// Built-environment columns where a larger raw value means less compact form.
pub const FLIPPED: [&str; 3] = ["dist_center", "dist_subcenter", "car_friendliness"];

/// Fitted column transform. `transform` maps a raw row to its treatment:
/// the aligned z-score minus the aligned city-average vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Standardizer<S> {
    pub names: Vec<String>,
    pub mean: Vec<S>,
    /// population standard deviation
    pub sd: Vec<S>,
    pub flipped: Vec<bool>,
    pub city_average: Vec<S>,
}

impl<S: Scalar> Standardizer<S> {
    pub fn fit(x: ArrayView2<S>, names: &[&str], flip: &[&str]) -> Result<Self, FeatureError> {
        let (n, p) = x.dim();
        assert_eq!(names.len(), p, "one name per column");
        if n < 2 {
            return Err(FeatureError::TooFewNeighborhoods { n, min: 2 });
        }
        let mut mean = Vec::with_capacity(p);
        let mut sd = Vec::with_capacity(p);
        for (j, col) in x.axis_iter(Axis(1)).enumerate() {
            let c: Vec<S> = col.to_vec();
            let m = stats::mean(&c);
            let s = stats::std_dev(&c);
            let scale = c.iter().fold(S::zero(), |a, v| a.max(v.abs()));
            if !(s > S::epsilon() * scale.max(S::one()) * S::from_f64_lossy(16.0)) {
                return Err(FeatureError::ConstantColumn(names[j].to_string()));
            }
            mean.push(m);
            sd.push(s);
        }
        let mut fitted = Self {
            names: names.iter().map(|s| s.to_string()).collect(),
            mean,
            sd,
            flipped: names.iter().map(|nm| flip.contains(nm)).collect(),
            city_average: vec![S::zero(); p],
        };
        let aligned = fitted.transform(x);
        fitted.city_average = aligned
            .axis_iter(Axis(1))
            .map(|c| stats::mean(&c.to_vec()))
            .collect();
        Ok(fitted)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform_row(&self, row: &[S]) -> Vec<S> {
        assert_eq!(row.len(), self.dim(), "row width");
        row.iter()
            .enumerate()
            .map(|(j, &v)| {
                let z = (v - self.mean[j]) / self.sd[j];
                let aligned = if self.flipped[j] { -z } else { z };
                aligned - self.city_average[j]
            })
            .collect()
    }

    pub fn transform(&self, x: ArrayView2<S>) -> Array2<S> {
        let mut out = Array2::zeros(x.dim());
        for (i, row) in x.axis_iter(Axis(0)).enumerate() {
            let t = self.transform_row(&row.to_vec());
            for (j, v) in t.into_iter().enumerate() {
                out[[i, j]] = v;
            }
        }
        out
    }
}
