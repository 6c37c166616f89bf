//! Least-squares gradient boosted regression trees, used as the nuisance
//! learners of the double-ML stage.
//!
//! Split search is exact greedy: every feature is presorted once, each tree is
//! grown level by level with a single pass per feature over the sorted order,
//! and every midpoint between consecutive distinct values is scored by the
//! squared-loss variance reduction. Ties keep the lowest feature index and
//! then the lowest threshold, so a fit is a pure function of data, params and
//! seed.

mod kfold;
mod search;

pub use kfold::kfold_indices;
pub use search::{random_search, random_search_scored, ParamSpace, SearchDraw};

use ndarray::ArrayView2;
use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{derive_seed, rng_from};
use crate::scalar::Scalar;
use crate::tree::{Node, RegressionTree, Tree};

pub const GBT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum GbtError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("non-finite value in training data")]
    NonFinite,
    #[error("fold count {k} invalid for {n} samples")]
    BadFoldCount { n: usize, k: usize },
    #[error("model document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub subsample: f64,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            n_trees: 1000,
            max_depth: 6,
            learning_rate: 0.01,
            min_samples_leaf: 2,
            subsample: 1.0,
            seed: 0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<(), GbtError> {
        if self.n_trees == 0 {
            return Err(GbtError::InvalidParams("n_trees must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(GbtError::InvalidParams(format!(
                "learning_rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(GbtError::InvalidParams(format!(
                "subsample {} outside (0, 1]",
                self.subsample
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(GbtError::InvalidParams("min_samples_leaf must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel<S> {
    pub base_score: S,
    pub learning_rate: S,
    pub n_features: usize,
    pub trees: Vec<RegressionTree<S>>,
    pub params: GbtParams,
}

#[derive(Serialize, Deserialize)]
struct GbtDocument<S> {
    schema_version: u32,
    kind: String,
    model: GbtModel<S>,
}

impl<S: Scalar> GbtModel<S> {
    pub fn predict_row(&self, row: &[S]) -> S {
        self.predict_row_staged(row, self.trees.len())
    }

    /// Prediction using only the first `k` trees.
    pub fn predict_row_staged(&self, row: &[S], k: usize) -> S {
        let boost: S = self.trees[..k.min(self.trees.len())]
            .iter()
            .map(|t| t.predict_row(row))
            .sum();
        self.base_score + self.learning_rate * boost
    }

    pub fn predict(&self, x: ArrayView2<'_, S>) -> Result<Vec<S>, GbtError> {
        if x.nrows() > 0 && x.ncols() != self.n_features {
            return Err(GbtError::DimensionMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        let mut row = vec![S::zero(); x.ncols()];
        Ok(x
            .rows()
            .into_iter()
            .map(|r| {
                row.iter_mut().zip(r.iter()).for_each(|(d, s)| *d = *s);
                self.predict_row(&row)
            })
            .collect())
    }

    /// Training-set mean squared error after each boosting round (index 0 is
    /// the base score alone).
    pub fn staged_mse(&self, x: ArrayView2<'_, S>, y: &[S]) -> Vec<S> {
        let n = S::from_usize_lossy(y.len());
        let mut preds = vec![self.base_score; y.len()];
        let rows: Vec<Vec<S>> = x.rows().into_iter().map(|r| r.to_vec()).collect();
        let mse = |p: &[S]| p.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).sum::<S>() / n;
        let mut out = vec![mse(&preds)];
        for tree in &self.trees {
            for (p, row) in preds.iter_mut().zip(&rows) {
                *p += self.learning_rate * tree.predict_row(row);
            }
            out.push(mse(&preds));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let doc = GbtDocument {
            schema_version: GBT_SCHEMA_VERSION,
            kind: "gbt".to_string(),
            model: self.clone(),
        };
        serde_json::to_string(&doc).expect("model serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, GbtError> {
        let doc: GbtDocument<S> =
            serde_json::from_str(s).map_err(|e| GbtError::Document(e.to_string()))?;
        if doc.schema_version != GBT_SCHEMA_VERSION || doc.kind != "gbt" {
            return Err(GbtError::Document(format!(
                "unsupported document {} v{}",
                doc.kind, doc.schema_version
            )));
        }
        Ok(doc.model)
    }
}

/// Fit a boosted ensemble on row-major `x` (n×p) and targets `y`.
pub fn fit_gbt<S: Scalar>(
    x: ArrayView2<'_, S>,
    y: &[S],
    params: &GbtParams,
) -> Result<GbtModel<S>, GbtError> {
    params.validate()?;
    let (n, p) = x.dim();
    if y.len() != n {
        return Err(GbtError::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    if n < 2 {
        return Err(GbtError::TooFewSamples { needed: 2, got: n });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(GbtError::NonFinite);
    }

    let base_score = y.iter().copied().sum::<S>() / S::from_usize_lossy(n);
    let learning_rate = S::from_f64_lossy(params.learning_rate);
    let mut model = GbtModel {
        base_score,
        learning_rate,
        n_features: p,
        trees: Vec::new(),
        params: params.clone(),
    };
    if y.iter().all(|&v| v == y[0]) {
        return Ok(model);
    }

    let columns: Vec<Vec<S>> = (0..p).map(|f| x.column(f).to_vec()).collect();
    let sorted: Vec<Vec<usize>> = columns
        .iter()
        .map(|col| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| col[a].partial_cmp(&col[b]).expect("finite"));
            idx
        })
        .collect();

    let mut residual: Vec<S> = y.iter().map(|&v| v - base_score).collect();
    let n_sub = ((params.subsample * n as f64).round() as usize).clamp(1, n);
    let mut rng = rng_from(derive_seed(params.seed, 0x0067_6274));

    let grower = LevelGrower {
        columns: &columns,
        sorted: &sorted,
        max_depth: params.max_depth,
        min_leaf: params.min_samples_leaf,
    };

    for _ in 0..params.n_trees {
        let active: Vec<bool> = if n_sub == n {
            vec![true; n]
        } else {
            let mut mask = vec![false; n];
            for i in index::sample(&mut rng, n, n_sub) {
                mask[i] = true;
            }
            mask
        };
        let (tree, leaf_of) = grower.grow(&residual, &active);
        for i in 0..n {
            let v = match leaf_of[i] {
                Some(node) => match &tree.nodes()[node] {
                    Node::Leaf { value, .. } => *value,
                    Node::Split { .. } => unreachable!(),
                },
                None => {
                    let row: Vec<S> = columns.iter().map(|c| c[i]).collect();
                    tree.predict_row(&row)
                }
            };
            residual[i] -= learning_rate * v;
        }
        model.trees.push(tree);
    }
    Ok(model)
}

struct LevelGrower<'a, S> {
    columns: &'a [Vec<S>],
    sorted: &'a [Vec<usize>],
    max_depth: usize,
    min_leaf: usize,
}

#[derive(Clone)]
struct OpenNode<S> {
    slot: usize,
    count: usize,
    sum: S,
}

#[derive(Clone, Copy)]
struct BestSplit<S> {
    gain: S,
    feature: usize,
    threshold: S,
}

struct ScanState<S> {
    count: usize,
    sum: S,
    last: Option<S>,
}

impl<S: Scalar> LevelGrower<'_, S> {
    /// Grows one tree on the active samples; returns the tree and, for each
    /// active sample, the leaf node it landed in.
    fn grow(&self, residual: &[S], active: &[bool]) -> (RegressionTree<S>, Vec<Option<usize>>) {
        let n = residual.len();
        // slot into `open` for the current level, per sample
        let mut node_of: Vec<Option<usize>> = vec![None; n];
        let mut protos: Vec<Proto<S>> = Vec::new();
        let mut root = OpenNode {
            slot: 0,
            count: 0,
            sum: S::zero(),
        };
        for i in 0..n {
            if active[i] {
                node_of[i] = Some(0);
                root.count += 1;
                root.sum += residual[i];
            }
        }
        protos.push(Proto::Pending {
            cover: root.count,
        });
        let mut open = vec![root];
        let mut depth = 0;

        while !open.is_empty() {
            let best = if depth < self.max_depth {
                self.best_splits(residual, &node_of, &open)
            } else {
                vec![None; open.len()]
            };
            let mut next: Vec<OpenNode<S>> = Vec::new();
            // level slot -> (left level slot, right level slot, feature, threshold)
            let mut routes: Vec<Option<(usize, usize, usize, S)>> = vec![None; open.len()];
            for (k, node) in open.iter().enumerate() {
                match best[k] {
                    Some(b) => {
                        let left_slot = protos.len();
                        protos.push(Proto::Pending { cover: 0 });
                        let right_slot = protos.len();
                        protos.push(Proto::Pending { cover: 0 });
                        protos[node.slot] = Proto::Split {
                            feature: b.feature,
                            threshold: b.threshold,
                            left: left_slot,
                            right: right_slot,
                            cover: node.count,
                        };
                        let l = next.len();
                        next.push(OpenNode {
                            slot: left_slot,
                            count: 0,
                            sum: S::zero(),
                        });
                        next.push(OpenNode {
                            slot: right_slot,
                            count: 0,
                            sum: S::zero(),
                        });
                        routes[k] = Some((l, l + 1, b.feature, b.threshold));
                    }
                    None => {
                        let value = if node.count > 0 {
                            node.sum / S::from_usize_lossy(node.count)
                        } else {
                            S::zero()
                        };
                        protos[node.slot] = Proto::Leaf {
                            value,
                            cover: node.count,
                        };
                    }
                }
            }
            for i in 0..n {
                let Some(k) = node_of[i] else { continue };
                match routes[k] {
                    Some((l, r, f, thr)) => {
                        let c = if self.columns[f][i] <= thr { l } else { r };
                        next[c].count += 1;
                        next[c].sum += residual[i];
                        node_of[i] = Some(c);
                    }
                    None => {
                        // park the sample on its final leaf, encoded past the level range
                        node_of[i] = None;
                        leaf_marks_push(&mut protos, open[k].slot, i);
                    }
                }
            }
            for node in &next {
                if let Proto::Pending { cover } = &mut protos[node.slot] {
                    *cover = node.count;
                }
            }
            open = next;
            depth += 1;
        }

        let mut leaf_of = vec![None; n];
        let nodes: Vec<Node<S, S>> = protos
            .iter()
            .enumerate()
            .map(|(slot, p)| match p {
                Proto::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    cover,
                } => Node::Split {
                    feature: *feature,
                    threshold: *threshold,
                    left: *left,
                    right: *right,
                    cover: S::from_usize_lossy(*cover),
                },
                Proto::Leaf { value, cover } => Node::Leaf {
                    value: *value,
                    cover: S::from_usize_lossy(*cover),
                },
                Proto::LeafWith {
                    value,
                    cover,
                    members,
                } => {
                    for &m in members {
                        leaf_of[m] = Some(slot);
                    }
                    Node::Leaf {
                        value: *value,
                        cover: S::from_usize_lossy(*cover),
                    }
                }
                Proto::Pending { .. } => unreachable!("all nodes resolved"),
            })
            .collect();
        (Tree::from_nodes(nodes), leaf_of)
    }

    fn best_splits(
        &self,
        residual: &[S],
        node_of: &[Option<usize>],
        open: &[OpenNode<S>],
    ) -> Vec<Option<BestSplit<S>>> {
        let mut best: Vec<Option<BestSplit<S>>> = vec![None; open.len()];
        let parent_score: Vec<S> = open
            .iter()
            .map(|o| {
                if o.count == 0 {
                    S::zero()
                } else {
                    o.sum * o.sum / S::from_usize_lossy(o.count)
                }
            })
            .collect();
        let splittable: Vec<bool> = open.iter().map(|o| o.count >= 2 * self.min_leaf).collect();
        if !splittable.iter().any(|&s| s) {
            return best;
        }
        let mut scan: Vec<ScanState<S>> = open
            .iter()
            .map(|_| ScanState {
                count: 0,
                sum: S::zero(),
                last: None,
            })
            .collect();
        for (f, order) in self.sorted.iter().enumerate() {
            let col = &self.columns[f];
            for s in scan.iter_mut() {
                s.count = 0;
                s.sum = S::zero();
                s.last = None;
            }
            for &i in order {
                let Some(k) = node_of[i] else { continue };
                if !splittable[k] {
                    continue;
                }
                let v = col[i];
                let st = &mut scan[k];
                if let Some(last) = st.last {
                    let total = open[k].count;
                    if v > last && st.count >= self.min_leaf && total - st.count >= self.min_leaf {
                        let nl = S::from_usize_lossy(st.count);
                        let nr = S::from_usize_lossy(total - st.count);
                        let sr = open[k].sum - st.sum;
                        let gain = st.sum * st.sum / nl + sr * sr / nr - parent_score[k];
                        let better = match &best[k] {
                            None => gain > S::zero(),
                            Some(b) => gain > b.gain,
                        };
                        if better {
                            best[k] = Some(BestSplit {
                                gain,
                                feature: f,
                                threshold: midpoint(last, v),
                            });
                        }
                    }
                }
                st.count += 1;
                st.sum += residual[i];
                st.last = Some(v);
            }
        }
        best
    }
}

enum Proto<S> {
    Pending {
        cover: usize,
    },
    Split {
        feature: usize,
        threshold: S,
        left: usize,
        right: usize,
        cover: usize,
    },
    Leaf {
        value: S,
        cover: usize,
    },
    LeafWith {
        value: S,
        cover: usize,
        members: Vec<usize>,
    },
}

fn leaf_marks_push<S: Copy>(protos: &mut [Proto<S>], slot: usize, member: usize) {
    match &mut protos[slot] {
        Proto::Leaf { value, cover } => {
            protos[slot] = Proto::LeafWith {
                value: *value,
                cover: *cover,
                members: vec![member],
            };
        }
        Proto::LeafWith { members, .. } => members.push(member),
        _ => unreachable!("sample parked on a non-leaf"),
    }
}

/// Threshold strictly separating `lo < hi`: their midpoint, or `lo` when the
/// midpoint rounds up to `hi`.
pub(crate) fn midpoint<S: Scalar>(lo: S, hi: S) -> S {
    let two = S::one() + S::one();
    let m = lo + (hi - lo) / two;
    if m >= hi || m < lo {
        lo
    } else {
        m
    }
}
