//! Random hyperparameter search scored by k-fold validation MSE.

use ndarray::{ArrayView2, Axis};
use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_gbt, kfold_indices, GbtError, GbtParams};
use crate::rng::{derive_seed, rng_from};
use crate::scalar::Scalar;

/// Discrete candidate values per hyperparameter; each draw picks one value per
/// axis uniformly at random.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub min_samples_leaf: Vec<usize>,
    pub subsample: Vec<f64>,
}

impl Default for ParamSpace {
    fn default() -> Self {
        Self {
            n_trees: vec![100, 300, 500, 1000],
            max_depth: vec![2, 3, 4, 6, 8],
            learning_rate: vec![0.005, 0.01, 0.05, 0.1],
            min_samples_leaf: vec![1, 2, 5],
            subsample: vec![0.7, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchDraw {
    pub params: GbtParams,
    pub cv_mse: f64,
}

/// Best parameters among `n_draws` random draws (ties go to the earliest draw).
pub fn random_search<S: Scalar>(
    x: ArrayView2<'_, S>,
    y: &[S],
    space: &ParamSpace,
    n_draws: usize,
    k: usize,
    seed: u64,
) -> Result<GbtParams, GbtError> {
    let draws = random_search_scored(x, y, space, n_draws, k, seed)?;
    let mut best = &draws[0];
    for d in &draws[1..] {
        if d.cv_mse < best.cv_mse {
            best = d;
        }
    }
    Ok(best.params.clone())
}

/// All draws with their mean validation MSE, in draw order.
pub fn random_search_scored<S: Scalar>(
    x: ArrayView2<'_, S>,
    y: &[S],
    space: &ParamSpace,
    n_draws: usize,
    k: usize,
    seed: u64,
) -> Result<Vec<SearchDraw>, GbtError> {
    if n_draws == 0 {
        return Err(GbtError::InvalidParams("n_draws must be >= 1".into()));
    }
    let folds = kfold_indices(y.len(), k, derive_seed(seed, 1))?;
    let mut rng = rng_from(derive_seed(seed, 2));
    let pick = |v: &[usize], rng: &mut _| *v.choose(rng).expect("non-empty axis");
    let candidates: Vec<GbtParams> = (0..n_draws)
        .map(|d| GbtParams {
            n_trees: pick(&space.n_trees, &mut rng),
            max_depth: pick(&space.max_depth, &mut rng),
            learning_rate: *space.learning_rate.choose(&mut rng).expect("non-empty axis"),
            min_samples_leaf: pick(&space.min_samples_leaf, &mut rng),
            subsample: *space.subsample.choose(&mut rng).expect("non-empty axis"),
            seed: derive_seed(seed, 100 + d as u64),
        })
        .collect();
    candidates
        .into_par_iter()
        .map(|params| {
            let cv_mse = cv_mse(x, y, &folds, &params)?;
            Ok(SearchDraw { params, cv_mse })
        })
        .collect()
}

fn cv_mse<S: Scalar>(
    x: ArrayView2<'_, S>,
    y: &[S],
    folds: &[Vec<usize>],
    params: &GbtParams,
) -> Result<f64, GbtError> {
    let mut total = 0.0;
    for (f, held) in folds.iter().enumerate() {
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        let xt = x.select(Axis(0), &train);
        let yt: Vec<S> = train.iter().map(|&i| y[i]).collect();
        let model = fit_gbt(xt.view(), &yt, params)?;
        let xv = x.select(Axis(0), held);
        let pred = model.predict(xv.view())?;
        let mse: f64 = held
            .iter()
            .zip(&pred)
            .map(|(&i, &p)| (y[i] - p).to_f64_lossy().powi(2))
            .sum::<f64>()
            / held.len() as f64;
        total += mse;
    }
    Ok(total / folds.len() as f64)
}
