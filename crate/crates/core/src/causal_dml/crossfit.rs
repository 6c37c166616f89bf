//! Cross-fitted nuisance residualization.

use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DmlError;
use crate::boosted_trees::{fit_gbt, kfold_indices, GbtParams};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrossfitParams {
    pub folds: usize,
    pub seed: u64,
    /// subtract each fold's mean residual
    pub center: bool,
    /// smallest admissible fold size
    pub min_leaf: usize,
    pub gbt: GbtParams,
}

impl Default for CrossfitParams {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            center: true,
            min_leaf: 5,
            gbt: GbtParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ResidualizedData<S> {
    pub y_res: Vec<S>,
    /// n×d
    pub t_res: Array2<S>,
    /// out-of-fold outcome prediction, `y − y_res`
    pub y_hat: Vec<S>,
    pub t_hat: Array2<S>,
    pub fold_assignment: Vec<usize>,
    pub nuisance_r2_y: S,
    /// mean over treatment dimensions
    pub nuisance_r2_t: S,
    pub nuisance_r2_t_per_dim: Vec<S>,
}

impl<S: Scalar> ResidualizedData<S> {
    pub fn n(&self) -> usize {
        self.y_res.len()
    }

    pub fn treatment_dim(&self) -> usize {
        self.t_res.ncols()
    }
}

/// Predicts `y` and every column of `t` from `x` with models that never saw
/// the predicted row, and returns the residuals.
pub fn crossfit_residualize<S: Scalar>(
    x: ArrayView2<'_, S>,
    y: &[S],
    t: ArrayView2<'_, S>,
    params: &CrossfitParams,
) -> Result<ResidualizedData<S>, DmlError> {
    let (n, _) = x.dim();
    let d = t.ncols();
    if y.len() != n || t.nrows() != n {
        return Err(DmlError::DimensionMismatch);
    }
    let needed = params.folds.max(2) * params.min_leaf;
    if n < needed {
        return Err(DmlError::TooFewUnits { n, needed });
    }
    let folds = kfold_indices(n, params.folds, derive_seed(params.seed, 0xF01D))?;
    let mut fold_assignment = vec![0; n];
    for (f, idx) in folds.iter().enumerate() {
        for &i in idx {
            fold_assignment[i] = f;
        }
    }

    // target 0 is the outcome, 1..=d the treatment columns
    let jobs: Vec<(usize, usize)> = (0..folds.len())
        .flat_map(|f| (0..=d).map(move |target| (f, target)))
        .collect();
    let preds: Vec<Result<Vec<S>, DmlError>> = jobs
        .par_iter()
        .map(|&(f, target)| {
            let train: Vec<usize> = (0..n).filter(|&i| fold_assignment[i] != f).collect();
            let xt = x.select(Axis(0), &train);
            let yt: Vec<S> = train
                .iter()
                .map(|&i| if target == 0 { y[i] } else { t[[i, target - 1]] })
                .collect();
            let mut gbt = params.gbt.clone();
            gbt.seed = derive_seed(params.seed, (f * (d + 1) + target) as u64 + 1);
            let model = fit_gbt(xt.view(), &yt, &gbt)?;
            let xf = x.select(Axis(0), &folds[f]);
            Ok(model.predict(xf.view())?)
        })
        .collect();

    let mut y_hat = vec![S::zero(); n];
    let mut t_hat = Array2::zeros((n, d));
    for (&(f, target), p) in jobs.iter().zip(preds) {
        let p = p?;
        for (&i, v) in folds[f].iter().zip(p) {
            if target == 0 {
                y_hat[i] = v;
            } else {
                t_hat[[i, target - 1]] = v;
            }
        }
    }
    let r2_y = stats::r_squared(y, &y_hat);
    let r2_t: Vec<S> = (0..d)
        .map(|j| stats::r_squared(&t.column(j).to_vec(), &t_hat.column(j).to_vec()))
        .collect();

    if params.center {
        for idx in &folds {
            let m = S::from_usize_lossy(idx.len());
            let shift = idx.iter().map(|&i| y[i] - y_hat[i]).sum::<S>() / m;
            for &i in idx {
                y_hat[i] += shift;
            }
            for j in 0..d {
                let shift = idx.iter().map(|&i| t[[i, j]] - t_hat[[i, j]]).sum::<S>() / m;
                for &i in idx {
                    t_hat[[i, j]] += shift;
                }
            }
        }
    }
    let y_res: Vec<S> = y.iter().zip(&y_hat).map(|(&a, &b)| a - b).collect();
    let t_res = &t - &t_hat;
    let mean_r2_t = if d == 0 {
        S::zero()
    } else {
        r2_t.iter().copied().sum::<S>() / S::from_usize_lossy(d)
    };
    Ok(ResidualizedData {
        y_res,
        t_res,
        y_hat,
        t_hat,
        fold_assignment,
        nuisance_r2_y: r2_y,
        nuisance_r2_t: mean_r2_t,
        nuisance_r2_t_per_dim: r2_t,
    })
}

/// Pooled residual-on-residual least squares: the partially linear DML
/// coefficient for a constant effect.
pub fn pooled_effect<S: Scalar>(res: &ResidualizedData<S>, lambda: S) -> Vec<S> {
    let mut acc = crate::linalg::RidgeAccumulator::new(res.treatment_dim());
    for (i, row) in res.t_res.axis_iter(Axis(0)).enumerate() {
        acc.add(&row.to_vec(), res.y_res[i], S::one());
    }
    acc.solve_normalized(lambda)
}
