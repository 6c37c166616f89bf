//! SHAP matrices over the effect surface and the multi-run moderation check.

use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::treeshap::ensemble_shap;
use crate::causal_dml::{crossfit_residualize, fit_causal_forest, CausalForestModel, CausalForestParams, CrossfitParams, DmlError};
use crate::rng::derive_seed;
use crate::stats;

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("run {run} failed: {source}")]
    PipelineFailure { run: usize, source: DmlError },
    #[error("inconsistent row or column counts")]
    DimensionMismatch,
}

/// Per-row attributions of one effect scope to the confounders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapMatrix {
    pub scope: String,
    /// n×p
    pub values: Array2<f64>,
    pub base_value: f64,
    /// surrogate prediction per row: row sum + base value
    pub prediction: Vec<f64>,
}

/// Effect scope explained by SHAP: the sum of θ over `dims`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scope {
    pub name: String,
    pub dims: Vec<usize>,
}

impl Scope {
    /// The combined scope plus one scope per group.
    pub fn combined_and_groups(d: usize, groups: &[(&str, &[usize])]) -> Vec<Scope> {
        let mut out = vec![Scope {
            name: "combined".into(),
            dims: (0..d).collect(),
        }];
        out.extend(groups.iter().map(|(name, dims)| Scope {
            name: name.to_string(),
            dims: dims.to_vec(),
        }));
        out
    }
}

pub fn shap_matrix(model: &CausalForestModel<f64>, x: ArrayView2<'_, f64>, scope: &Scope) -> ShapMatrix {
    let trees = model.summed_component_trees(&scope.dims);
    let rows: Vec<Vec<f64>> = x.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
    let per_row: Vec<(Vec<f64>, f64)> = rows.par_iter().map(|r| ensemble_shap(&trees, r)).collect();
    let (n, p) = x.dim();
    let base_value = per_row.first().map_or(0.0, |r| r.1);
    let values = Array2::from_shape_fn((n, p), |(i, j)| per_row[i].0[j]);
    let prediction = per_row.iter().map(|(phi, b)| phi.iter().sum::<f64>() + b).collect();
    ShapMatrix {
        scope: scope.name.clone(),
        values,
        base_value,
        prediction,
    }
}

/// `confounder,value,shap` rows for dependence plots, one block per confounder.
pub fn write_shap_csv<W: Write>(
    out: W,
    shap: &ShapMatrix,
    x: ArrayView2<'_, f64>,
    ids: &[String],
    names: &[&str],
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["neighborhood_id", "confounder", "value", "shap"])?;
    for (j, name) in names.iter().enumerate() {
        for (i, id) in ids.iter().enumerate() {
            w.write_record([
                id.as_str(),
                name,
                &x[[i, j]].to_string(),
                &shap.values[[i, j]].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    #[serde(rename = "+")]
    Positive,
    #[serde(rename = "-")]
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeratorResult {
    pub confounder: String,
    pub qualifies: bool,
    /// sign of the median correlation
    pub sign: Sign,
    pub spearman_rho: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeReport {
    pub scope: String,
    pub moderators: Vec<ModeratorResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModerationReport {
    pub n_runs: usize,
    pub min_abs_rho: f64,
    /// positive SHAP means a larger θ component
    pub sign_convention: String,
    pub scopes: Vec<ScopeReport>,
}

impl ModerationReport {
    pub fn scope(&self, name: &str) -> Option<&ScopeReport> {
        self.scopes.iter().find(|s| s.scope == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModerationParams {
    pub n_runs: usize,
    pub master_seed: u64,
    pub min_abs_rho: f64,
}

impl Default for ModerationParams {
    fn default() -> Self {
        Self {
            n_runs: 10,
            master_seed: 0,
            min_abs_rho: 0.2,
        }
    }
}

/// A confounder qualifies when its correlations agree in sign across all
/// runs and none is weaker than `min_abs_rho`.
pub fn qualifies(rhos: &[f64], min_abs_rho: f64) -> bool {
    !rhos.is_empty()
        && (rhos.iter().all(|&r| r > 0.0) || rhos.iter().all(|&r| r < 0.0))
        && rhos.iter().all(|r| r.abs() >= min_abs_rho)
}

/// Refits the DML pipeline `n_runs` times with seeds derived from the master
/// seed and correlates each confounder with its SHAP column per scope.
#[allow(clippy::too_many_arguments)]
pub fn moderation_analysis(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    t: ArrayView2<'_, f64>,
    names: &[&str],
    scopes: &[Scope],
    crossfit: &CrossfitParams,
    forest: &CausalForestParams,
    params: &ModerationParams,
) -> Result<ModerationReport, ExplainError> {
    if names.len() != x.ncols() || y.len() != x.nrows() || t.nrows() != x.nrows() {
        return Err(ExplainError::DimensionMismatch);
    }
    // rhos[run][scope][confounder]
    let runs: Vec<Result<Vec<Vec<f64>>, ExplainError>> = (0..params.n_runs)
        .into_par_iter()
        .map(|run| {
            let seed = derive_seed(params.master_seed, run as u64);
            let cf = CrossfitParams {
                seed: derive_seed(seed, 1),
                ..crossfit.clone()
            };
            let fp = CausalForestParams {
                seed: derive_seed(seed, 2),
                ..forest.clone()
            };
            let fail = |source| ExplainError::PipelineFailure { run, source };
            let res = crossfit_residualize(x, y, t, &cf).map_err(fail)?;
            let model = fit_causal_forest(x, &res, &fp).map_err(fail)?;
            Ok(scopes
                .iter()
                .map(|s| {
                    let shap = shap_matrix(&model, x, s);
                    (0..x.ncols())
                        .map(|j| stats::spearman(&x.column(j).to_vec(), &shap.values.column(j).to_vec()))
                        .collect()
                })
                .collect())
        })
        .collect();
    let runs: Vec<Vec<Vec<f64>>> = runs.into_iter().collect::<Result<_, _>>()?;

    let scopes = scopes
        .iter()
        .enumerate()
        .map(|(s, scope)| ScopeReport {
            scope: scope.name.clone(),
            moderators: names
                .iter()
                .enumerate()
                .map(|(j, name)| {
                    let rhos: Vec<f64> = runs.iter().map(|r| r[s][j]).collect();
                    let mut sorted = rhos.clone();
                    sorted.sort_by(f64::total_cmp);
                    let median = if sorted.is_empty() { 0.0 } else { sorted[sorted.len() / 2] };
                    ModeratorResult {
                        confounder: name.to_string(),
                        qualifies: qualifies(&rhos, params.min_abs_rho),
                        sign: if median < 0.0 { Sign::Negative } else { Sign::Positive },
                        spearman_rho: rhos,
                    }
                })
                .collect(),
        })
        .collect();
    Ok(ModerationReport {
        n_runs: params.n_runs,
        min_abs_rho: params.min_abs_rho,
        sign_convention: "positive SHAP value = larger effect component".into(),
        scopes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boosted_trees::GbtParams;
    use crate::synth::{generate_matrix, EffectRule, SyntheticSpec};
    use ndarray::Array2;

    fn light() -> CrossfitParams {
        CrossfitParams {
            gbt: GbtParams {
                n_trees: 40,
                learning_rate: 0.2,
                max_depth: 3,
                ..GbtParams::default()
            },
            ..CrossfitParams::default()
        }
    }

    fn forest() -> CausalForestParams {
        CausalForestParams {
            n_trees: 20,
            ..CausalForestParams::default()
        }
    }

    #[test]
    fn qualification_rule() {
        assert!(qualifies(&[0.3, 0.5, 0.2], 0.2));
        assert!(qualifies(&[-0.9, -0.21], 0.2));
        assert!(!qualifies(&[0.3, -0.5, 0.4], 0.2));
        assert!(!qualifies(&[0.3, 0.19, 0.4], 0.2));
        assert!(!qualifies(&[0.0, 0.0], 0.0));
        assert!(!qualifies(&[], 0.2));
    }

    #[test]
    fn shap_rows_are_locally_accurate_for_every_scope() {
        let d = generate_matrix(&SyntheticSpec {
            n: 300,
            p: 3,
            effect: EffectRule::Linear { feature: 1, a: 1.0, b: 2.0 },
            seed: 4,
            ..SyntheticSpec::default()
        });
        // two treatment columns so the scopes differ
        let t = Array2::from_shape_fn((300, 2), |(i, j)| d.t[[i, 0]] * (1.0 + j as f64) + 0.1 * j as f64 * d.x[[i, 2]]);
        let res = crossfit_residualize(d.x.view(), &d.y, t.view(), &light()).unwrap();
        let model = fit_causal_forest(d.x.view(), &res, &forest()).unwrap();
        let scopes = Scope::combined_and_groups(2, &[("a", &[0]), ("b", &[1])]);
        for scope in &scopes {
            let shap = shap_matrix(&model, d.x.view(), scope);
            for i in 0..300 {
                let theta = model.predict_theta_surrogate(&d.x.row(i).to_vec());
                let want: f64 = scope.dims.iter().map(|&j| theta[j]).sum();
                assert!((shap.prediction[i] - want).abs() < 1e-6);
                let total = shap.values.row(i).sum() + shap.base_value;
                assert!((total - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn analysis_is_deterministic_and_finds_planted_moderator() {
        let d = generate_matrix(&SyntheticSpec {
            n: 400,
            p: 3,
            effect: EffectRule::Linear { feature: 1, a: 1.0, b: 2.0 },
            seed: 9,
            ..SyntheticSpec::default()
        });
        let scopes = Scope::combined_and_groups(1, &[]);
        let params = ModerationParams {
            n_runs: 3,
            master_seed: 5,
            ..ModerationParams::default()
        };
        let run = || {
            moderation_analysis(d.x.view(), &d.y, d.t.view(), &["x0", "income", "x2"], &scopes, &light(), &forest(), &params)
                .unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        let income = &a.scope("combined").unwrap().moderators[1];
        assert_eq!(income.spearman_rho.len(), 3);
        assert!(income.qualifies);
        assert_eq!(income.sign, Sign::Positive);
        let json = serde_json::to_string(&a).unwrap();
        assert!(json.contains("\"sign\":\"+\""));
    }

    #[test]
    fn errors() {
        let d = generate_matrix(&SyntheticSpec {
            n: 12,
            p: 2,
            seed: 1,
            ..SyntheticSpec::default()
        });
        let scopes = Scope::combined_and_groups(1, &[]);
        let p = ModerationParams::default();
        let err = moderation_analysis(d.x.view(), &d.y, d.t.view(), &["a"], &scopes, &light(), &forest(), &p);
        assert_eq!(err, Err(ExplainError::DimensionMismatch));
        let err = moderation_analysis(d.x.view(), &d.y, d.t.view(), &["a", "b"], &scopes, &light(), &forest(), &p);
        assert!(matches!(err, Err(ExplainError::PipelineFailure { run: 0, .. })));
    }
}
