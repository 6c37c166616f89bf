//! Matrix-level data-generating processes with known effects.

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::rng_from;

/// θ as a function of the covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EffectRule {
    Constant { value: f64 },
    /// `low` below `cut` on `feature`, `high` above
    Step { feature: usize, cut: f64, low: f64, high: f64 },
    /// `a + b·x[feature]`
    Linear { feature: usize, a: f64, b: f64 },
}

impl EffectRule {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match *self {
            EffectRule::Constant { value } => value,
            EffectRule::Step { feature, cut, low, high } => {
                if x[feature] > cut {
                    high
                } else {
                    low
                }
            }
            EffectRule::Linear { feature, a, b } => a + b * x[feature],
        }
    }
}

/// X ~ U(0,1)^p, T = s·(2X₁ − 1) + σ_T·ε, Y = β·X₁ + θ(X)·T + σ_Y·ε.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n: usize,
    pub p: usize,
    /// s, the strength of residential self-selection on X₁
    pub self_selection: f64,
    /// β, the confounder's direct effect on the outcome
    pub outcome_confounding: f64,
    pub effect: EffectRule,
    pub treatment_noise_sd: f64,
    pub outcome_noise_sd: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 2000,
            p: 5,
            self_selection: 1.0,
            outcome_confounding: 5.0,
            effect: EffectRule::Constant { value: 1.5 },
            treatment_noise_sd: 1.0,
            outcome_noise_sd: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub x: Array2<f64>,
    /// n×1
    pub t: Array2<f64>,
    pub y: Vec<f64>,
    pub theta: Vec<f64>,
    /// outcome without the treatment term and noise
    pub baseline: Vec<f64>,
    pub noise: Vec<f64>,
}

pub fn generate_matrix(spec: &SyntheticSpec) -> SyntheticData {
    let mut rng = rng_from(spec.seed);
    let (n, p) = (spec.n, spec.p.max(1));
    let x = Array2::from_shape_fn((n, p), |_| rng.random::<f64>());
    let mut t = Array2::zeros((n, 1));
    let mut y = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    let mut baseline = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for i in 0..n {
        let row = x.row(i).to_vec();
        let et: f64 = rng.sample(StandardNormal);
        let ey: f64 = rng.sample(StandardNormal);
        let ti = spec.self_selection * (2.0 * row[0] - 1.0) + spec.treatment_noise_sd * et;
        let th = spec.effect.eval(&row);
        let g = spec.outcome_confounding * row[0];
        let e = spec.outcome_noise_sd * ey;
        t[[i, 0]] = ti;
        y.push(g + th * ti + e);
        theta.push(th);
        baseline.push(g);
        noise.push(e);
    }
    SyntheticData { x, t, y, theta, baseline, noise }
}

/// Slope of the least-squares line of `y` on `t` alone.
pub fn naive_slope(t: &[f64], y: &[f64]) -> f64 {
    let mt = crate::stats::mean(t);
    let my = crate::stats::mean(y);
    let cov: f64 = t.iter().zip(y).map(|(a, b)| (a - mt) * (b - my)).sum();
    let var: f64 = t.iter().map(|a| (a - mt) * (a - mt)).sum();
    cov / var
}
