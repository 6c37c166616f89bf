//! Per-neighborhood effects, their decomposition and fit diagnostics.

use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{CausalForestModel, DmlError, ResidualizedData};
use crate::linalg::dot;
use crate::scalar::Scalar;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct EffectEstimate<S> {
    pub neighborhood_id: String,
    /// kg CO₂e per household-day per standard deviation of each aligned feature
    pub theta: Vec<S>,
    pub total_effect: S,
    pub relative_effect: S,
}

impl<S: Scalar> EffectEstimate<S> {
    pub fn new(neighborhood_id: String, theta: Vec<S>, treatment: &[S], mean_outcome: S) -> Self {
        let total_effect = dot(&theta, treatment);
        Self {
            neighborhood_id,
            theta,
            total_effect,
            relative_effect: total_effect / mean_outcome,
        }
    }
}

/// θ(xᵢ), θ(xᵢ)·tᵢ and the total relative to `mean_outcome` for every row.
pub fn estimate_effects<S: Scalar>(
    model: &CausalForestModel<S>,
    ids: &[String],
    x: ArrayView2<'_, S>,
    t: ArrayView2<'_, S>,
    mean_outcome: S,
) -> Result<Vec<EffectEstimate<S>>, DmlError> {
    if ids.len() != x.nrows() || t.nrows() != x.nrows() || t.ncols() != model.treatment_dim() {
        return Err(DmlError::DimensionMismatch);
    }
    let theta = model.predict(x);
    Ok(ids
        .iter()
        .zip(theta.axis_iter(Axis(0)))
        .zip(t.axis_iter(Axis(0)))
        .map(|((id, th), ti)| EffectEstimate::new(id.clone(), th.to_vec(), &ti.to_vec(), mean_outcome))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Share {
    pub name: String,
    pub mean_abs_theta: f64,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub features: Vec<Share>,
    pub groups: Vec<Share>,
}

/// Built-environment columns per 5D group, as indices into the eight
/// treatment dimensions.
pub const FIVE_D_GROUPS: [(&str, &[usize]); 5] = [
    ("destination_accessibility", &[0, 1, 2]),
    ("density", &[3]),
    ("diversity", &[4]),
    ("design", &[5, 6]),
    ("distance_to_transit", &[7]),
];

/// Shares of meanᵢ|θ_j(xᵢ)| per feature and per group, in percent.
pub fn decompose_effect<S: Scalar>(
    effects: &[EffectEstimate<S>],
    names: &[&str],
    groups: &[(&str, &[usize])],
) -> Result<Decomposition, DmlError> {
    let Some(first) = effects.first() else {
        return Err(DmlError::AllZeroEffects);
    };
    let d = first.theta.len();
    if names.len() != d {
        return Err(DmlError::DimensionMismatch);
    }
    let mut mean_abs = vec![0.0f64; d];
    for e in effects {
        for (m, v) in mean_abs.iter_mut().zip(&e.theta) {
            *m += v.to_f64_lossy().abs();
        }
    }
    let n = effects.len() as f64;
    mean_abs.iter_mut().for_each(|m| *m /= n);
    let total: f64 = mean_abs.iter().sum();
    if !(total > 0.0) {
        return Err(DmlError::AllZeroEffects);
    }
    let features: Vec<Share> = names
        .iter()
        .zip(&mean_abs)
        .map(|(name, &m)| Share {
            name: name.to_string(),
            mean_abs_theta: m,
            percent: 100.0 * m / total,
        })
        .collect();
    let groups = groups
        .iter()
        .map(|(name, dims)| Share {
            name: name.to_string(),
            mean_abs_theta: dims.iter().map(|&j| mean_abs[j]).sum(),
            percent: dims.iter().map(|&j| features[j].percent).sum(),
        })
        .collect();
    Ok(Decomposition { features, groups })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMetrics {
    pub r2_combined: f64,
    pub nuisance_r2_y: f64,
    pub nuisance_r2_t: f64,
    pub nuisance_r2_t_per_dim: Vec<f64>,
    /// Var(total effect) / Var(outcome)
    pub attribution_share: f64,
    /// mean absolute gap between the kernel θ and the per-leaf surrogate θ
    pub surrogate_gap: f64,
}

/// `r2_combined` scores ŷᵢ = m̂(xᵢ) + θ(xᵢ)·t̃ᵢ against yᵢ, where m̂ is the
/// cross-fitted outcome nuisance and t̃ the treatment residual.
pub fn fit_metrics<S: Scalar>(
    y: &[S],
    x: ArrayView2<'_, S>,
    effects: &[EffectEstimate<S>],
    res: &ResidualizedData<S>,
    model: &CausalForestModel<S>,
) -> Result<FitMetrics, DmlError> {
    let n = y.len();
    if effects.len() != n || res.n() != n || x.nrows() != n {
        return Err(DmlError::DimensionMismatch);
    }
    let pred: Vec<S> = (0..n)
        .map(|i| res.y_hat[i] + dot(&effects[i].theta, &res.t_res.row(i).to_vec()))
        .collect();
    let totals: Vec<S> = effects.iter().map(|e| e.total_effect).collect();
    let var_y = stats::variance(y);
    let attribution = if var_y > S::zero() {
        stats::variance(&totals) / var_y
    } else {
        S::zero()
    };
    let mut gap = 0.0;
    for (i, row) in x.axis_iter(Axis(0)).enumerate() {
        let s = model.predict_theta_surrogate(&row.to_vec());
        gap += s
            .iter()
            .zip(&effects[i].theta)
            .map(|(a, b)| (*a - *b).to_f64_lossy().abs())
            .sum::<f64>()
            / s.len().max(1) as f64;
    }
    Ok(FitMetrics {
        r2_combined: stats::r_squared(y, &pred).to_f64_lossy(),
        nuisance_r2_y: res.nuisance_r2_y.to_f64_lossy(),
        nuisance_r2_t: res.nuisance_r2_t.to_f64_lossy(),
        nuisance_r2_t_per_dim: res.nuisance_r2_t_per_dim.iter().map(|v| v.to_f64_lossy()).collect(),
        attribution_share: attribution.to_f64_lossy(),
        surrogate_gap: gap / n.max(1) as f64,
    })
}
