//! Honest causal forest over the confounders with a kernel-weighted ridge
//! final stage.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DmlError, ResidualizedData};
use crate::boosted_trees::midpoint;
use crate::linalg::{norm_sq, RidgeAccumulator};
use crate::rng::{derive_seed, rng_from};
use crate::scalar::Scalar;
use crate::tree::{Node, RegressionTree, Tree};

pub const FOREST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CausalForestParams {
    pub n_trees: usize,
    /// fraction of units drawn, without replacement, per tree
    pub subsample_fraction: f64,
    /// fraction of the drawn units used to choose splits
    pub honest_split: f64,
    /// minimum units of each half in every leaf
    pub min_leaf: usize,
    pub ridge_lambda: f64,
    pub max_depth: Option<usize>,
    pub seed: u64,
}

impl Default for CausalForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            subsample_fraction: 0.5,
            honest_split: 0.5,
            min_leaf: 5,
            ridge_lambda: 1e-3,
            max_depth: None,
            seed: 0,
        }
    }
}

impl CausalForestParams {
    pub fn validate(&self) -> Result<(), DmlError> {
        let frac = |v: f64| v > 0.0 && v < 1.0;
        if self.n_trees == 0
            || !frac(self.subsample_fraction)
            || !frac(self.honest_split)
            || self.min_leaf == 0
            || !(self.ridge_lambda >= 0.0)
        {
            return Err(DmlError::InvalidParams);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CausalLeaf<S> {
    /// estimation-half units in this leaf
    pub members: Vec<u32>,
    /// ridge solution on `members`
    pub theta: Vec<S>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CausalTree<S> {
    pub tree: Tree<S, CausalLeaf<S>>,
    pub split_sample: Vec<u32>,
    pub estimation_sample: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct CausalForestModel<S> {
    pub n_features: usize,
    pub trees: Vec<CausalTree<S>>,
    pub t_res: Array2<S>,
    pub y_res: Vec<S>,
    pub params: CausalForestParams,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
struct ForestDocument<S> {
    schema_version: u32,
    kind: String,
    model: CausalForestModel<S>,
}

impl<S: Scalar> CausalForestModel<S> {
    pub fn treatment_dim(&self) -> usize {
        self.t_res.ncols()
    }

    /// Kernel weights of every training unit for the query `x`; they sum to 1.
    pub fn forest_weights(&self, x: &[S]) -> Vec<S> {
        let mut w = vec![S::zero(); self.y_res.len()];
        let per_tree = S::one() / S::from_usize_lossy(self.trees.len());
        for ct in &self.trees {
            let leaf = ct.tree.leaf_value(x);
            let share = per_tree / S::from_usize_lossy(leaf.members.len());
            for &i in &leaf.members {
                w[i as usize] += share;
            }
        }
        w
    }

    /// θ(x): weighted ridge over all training residuals with forest weights.
    pub fn predict_theta(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.n_features, "query width");
        let w = self.forest_weights(x);
        let mut acc = RidgeAccumulator::new(self.treatment_dim());
        let mut row = vec![S::zero(); self.treatment_dim()];
        for (i, &wi) in w.iter().enumerate() {
            if wi > S::zero() {
                for (r, &v) in row.iter_mut().zip(self.t_res.row(i)) {
                    *r = v;
                }
                acc.add(&row, self.y_res[i], wi);
            }
        }
        acc.solve_normalized(S::from_f64_lossy(self.params.ridge_lambda))
    }

    /// θ for every row of `x`, n×d.
    pub fn predict(&self, x: ArrayView2<'_, S>) -> Array2<S> {
        let queries: Vec<Vec<S>> = x.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
        let rows: Vec<Vec<S>> = queries.par_iter().map(|q| self.predict_theta(q)).collect();
        let d = self.treatment_dim();
        Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i][j])
    }

    /// Mean of the per-leaf cached θ over trees: the tree-shaped surrogate
    /// of the effect surface.
    pub fn predict_theta_surrogate(&self, x: &[S]) -> Vec<S> {
        let mut out = vec![S::zero(); self.treatment_dim()];
        for ct in &self.trees {
            for (o, &v) in out.iter_mut().zip(&ct.tree.leaf_value(x).theta) {
                *o += v;
            }
        }
        let k = S::from_usize_lossy(self.trees.len());
        out.iter_mut().for_each(|o| *o /= k);
        out
    }

    /// Regression trees reading out component `j` of each leaf θ.
    pub fn component_trees(&self, j: usize) -> Vec<RegressionTree<S>> {
        self.trees.iter().map(|ct| ct.tree.map_leaves(|l| l.theta[j])).collect()
    }

    /// Regression trees reading out Σ_{j∈dims} θ_j.
    pub fn summed_component_trees(&self, dims: &[usize]) -> Vec<RegressionTree<S>> {
        self.trees
            .iter()
            .map(|ct| ct.tree.map_leaves(|l| dims.iter().map(|&j| l.theta[j]).sum()))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ForestDocument {
            schema_version: FOREST_SCHEMA_VERSION,
            kind: "causal_forest".into(),
            model: self.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, DmlError> {
        let doc: ForestDocument<S> =
            serde_json::from_str(s).map_err(|e| DmlError::Document(e.to_string()))?;
        if doc.schema_version != FOREST_SCHEMA_VERSION || doc.kind != "causal_forest" {
            return Err(DmlError::Document(format!(
                "unsupported document {} v{}",
                doc.kind, doc.schema_version
            )));
        }
        Ok(doc.model)
    }
}

/// Grows the forest on confounders `x` and the residuals in `res`.
pub fn fit_causal_forest<S: Scalar>(
    x: ArrayView2<'_, S>,
    res: &ResidualizedData<S>,
    params: &CausalForestParams,
) -> Result<CausalForestModel<S>, DmlError> {
    params.validate()?;
    let (n, p) = x.dim();
    if res.n() != n {
        return Err(DmlError::DimensionMismatch);
    }
    let halves = |n: usize| {
        let drawn = (params.subsample_fraction * n as f64).floor() as usize;
        let n_split = (params.honest_split * drawn as f64).floor() as usize;
        (drawn, n_split)
    };
    let enough = |n: usize| {
        let (drawn, n_split) = halves(n);
        n_split >= params.min_leaf && drawn - n_split >= params.min_leaf
    };
    if !enough(n) {
        let needed = (n + 1..).find(|&m| enough(m)).expect("some size suffices");
        return Err(DmlError::TooFewUnits { n, needed });
    }
    let (drawn, n_split) = halves(n);
    let columns: Vec<Vec<S>> = (0..p).map(|f| x.column(f).to_vec()).collect();
    let t_rows: Vec<Vec<S>> = res.t_res.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
    let ctx = GrowContext {
        columns: &columns,
        t: &t_rows,
        y: &res.y_res,
        min_leaf: params.min_leaf,
        max_depth: params.max_depth.unwrap_or(usize::MAX),
        lambda: S::from_f64_lossy(params.ridge_lambda),
        dim: res.treatment_dim(),
    };
    let trees: Vec<CausalTree<S>> = (0..params.n_trees)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_from(derive_seed(params.seed, b as u64));
            let mut sample: Vec<u32> = index::sample(&mut rng, n, drawn)
                .into_iter()
                .map(|i| i as u32)
                .collect();
            let est = sample.split_off(n_split);
            let split = sample;
            let tree = ctx.grow(&split, &est);
            let mut split_sorted = split;
            split_sorted.sort_unstable();
            let mut est_sorted = est;
            est_sorted.sort_unstable();
            CausalTree {
                tree,
                split_sample: split_sorted,
                estimation_sample: est_sorted,
            }
        })
        .collect();
    Ok(CausalForestModel {
        n_features: p,
        trees,
        t_res: res.t_res.clone(),
        y_res: res.y_res.clone(),
        params: params.clone(),
    })
}

struct GrowContext<'a, S> {
    columns: &'a [Vec<S>],
    t: &'a [Vec<S>],
    y: &'a [S],
    min_leaf: usize,
    max_depth: usize,
    lambda: S,
    dim: usize,
}

struct Candidate<S> {
    score: S,
    feature: usize,
    threshold: S,
}

enum Pending<S> {
    Leaf(CausalLeaf<S>, usize),
    Split {
        feature: usize,
        threshold: S,
        left: usize,
        right: usize,
        cover: usize,
    },
}

impl<S: Scalar> GrowContext<'_, S> {
    fn accumulate(&self, idx: &[u32]) -> RidgeAccumulator<S> {
        let mut acc = RidgeAccumulator::new(self.dim);
        for &i in idx {
            acc.add(&self.t[i as usize], self.y[i as usize], S::one());
        }
        acc
    }

    fn grow(&self, split: &[u32], est: &[u32]) -> Tree<S, CausalLeaf<S>> {
        let mut nodes: Vec<Option<Pending<S>>> = vec![None];
        // (slot, split units, estimation units, depth)
        let mut stack = vec![(0usize, split.to_vec(), est.to_vec(), 0usize)];
        while let Some((slot, s, e, depth)) = stack.pop() {
            let best = if depth < self.max_depth {
                self.best_split(&s, &e)
            } else {
                None
            };
            match best {
                Some(c) => {
                    let go_left = |i: &u32| self.columns[c.feature][*i as usize] <= c.threshold;
                    let (sl, sr): (Vec<u32>, Vec<u32>) = s.iter().partition(|i| go_left(i));
                    let (el, er): (Vec<u32>, Vec<u32>) = e.iter().partition(|i| go_left(i));
                    let left = nodes.len();
                    nodes.push(None);
                    let right = nodes.len();
                    nodes.push(None);
                    nodes[slot] = Some(Pending::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right,
                        cover: e.len(),
                    });
                    // right first so the left subtree is expanded first
                    stack.push((right, sr, er, depth + 1));
                    stack.push((left, sl, el, depth + 1));
                }
                None => {
                    let theta = self.accumulate(&e).solve_normalized(self.lambda);
                    let cover = e.len();
                    nodes[slot] = Some(Pending::Leaf(CausalLeaf { members: e, theta }, cover));
                }
            }
        }
        Tree::from_nodes(
            nodes
                .into_iter()
                .map(|n| match n.expect("every slot filled") {
                    Pending::Leaf(value, cover) => Node::Leaf {
                        value,
                        cover: S::from_usize_lossy(cover),
                    },
                    Pending::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        cover,
                    } => Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        cover: S::from_usize_lossy(cover),
                    },
                })
                .collect(),
        )
    }

    /// Maximizes nL·nR/n²·‖θL − θR‖² over splits that leave at least
    /// `min_leaf` units of both halves on each side. Ties keep the lowest
    /// feature, then the lowest threshold.
    fn best_split(&self, s: &[u32], e: &[u32]) -> Option<Candidate<S>> {
        let m = self.min_leaf;
        if s.len() < 2 * m || e.len() < 2 * m {
            return None;
        }
        let total = self.accumulate(s);
        let n = S::from_usize_lossy(s.len());
        let mut best: Option<Candidate<S>> = None;
        let mut order: Vec<u32> = s.to_vec();
        let mut est_vals: Vec<S> = Vec::with_capacity(e.len());
        for (f, col) in self.columns.iter().enumerate() {
            order.sort_by(|&a, &b| cmp_scalar(col[a as usize], col[b as usize]).then(a.cmp(&b)));
            est_vals.clear();
            est_vals.extend(e.iter().map(|&i| col[i as usize]));
            est_vals.sort_by(|a, b| cmp_scalar(*a, *b));
            let mut left = RidgeAccumulator::new(self.dim);
            let mut est_left = 0;
            for k in 0..order.len() - 1 {
                let i = order[k] as usize;
                left.add(&self.t[i], self.y[i], S::one());
                let nl = k + 1;
                let v = col[i];
                let next = col[order[k + 1] as usize];
                if !(next > v) || nl < m || s.len() - nl < m {
                    continue;
                }
                let thr = midpoint(v, next);
                while est_left < est_vals.len() && est_vals[est_left] <= thr {
                    est_left += 1;
                }
                if est_left < m || e.len() - est_left < m {
                    continue;
                }
                let mut right = total.clone();
                right.subtract(&left);
                let tl = left.solve_normalized(self.lambda);
                let tr = right.solve_normalized(self.lambda);
                let diff: Vec<S> = tl.iter().zip(&tr).map(|(a, b)| *a - *b).collect();
                let fl = S::from_usize_lossy(nl);
                let score = fl * (n - fl) / (n * n) * norm_sq(&diff);
                let better = match &best {
                    None => score > S::zero(),
                    Some(b) => score > b.score,
                };
                if better {
                    best = Some(Candidate {
                        score,
                        feature: f,
                        threshold: thr,
                    });
                }
            }
        }
        best
    }
}

fn cmp_scalar<S: Scalar>(a: S, b: S) -> std::cmp::Ordering {
    a.partial_cmp(&b).expect("finite inputs")
}
