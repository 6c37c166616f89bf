//! Binary decision trees stored as flat node arrays.
//!
//! A row goes left when `row[feature] <= threshold`. Every node records its
//! `cover`, the amount of training data reaching it; covers of the two children
//! of a split sum to the parent's cover, which is what path-dependent TreeSHAP
//! relies on.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node<S, L> {
    Split {
        feature: usize,
        threshold: S,
        left: usize,
        right: usize,
        cover: S,
    },
    Leaf {
        value: L,
        cover: S,
    },
}

impl<S: Copy, L> Node<S, L> {
    pub fn cover(&self) -> S {
        match self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => *cover,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<S, L> {
    nodes: Vec<Node<S, L>>,
}

/// Tree with a scalar leaf value.
pub type RegressionTree<S> = Tree<S, S>;

impl<S: Scalar, L> Tree<S, L> {
    /// Builds a tree from nodes; node 0 is the root. Panics if a child index
    /// does not point forward to an existing node.
    pub fn from_nodes(nodes: Vec<Node<S, L>>) -> Self {
        assert!(!nodes.is_empty(), "tree needs a root");
        for (i, n) in nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = n {
                assert!(*left > i && *left < nodes.len(), "bad left child");
                assert!(*right > i && *right < nodes.len(), "bad right child");
            }
        }
        Self { nodes }
    }

    pub fn leaf(value: L, cover: S) -> Self {
        Self {
            nodes: vec![Node::Leaf { value, cover }],
        }
    }

    pub fn nodes(&self) -> &[Node<S, L>] {
        &self.nodes
    }

    /// Index of the leaf node reached by `row`.
    pub fn leaf_index(&self, row: &[S]) -> usize {
        let mut idx = 0;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { .. } => return idx,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    idx = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn leaf_value(&self, row: &[S]) -> &L {
        match &self.nodes[self.leaf_index(row)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn go<S, L>(nodes: &[Node<S, L>], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Features appearing in at least one split.
    pub fn split_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    pub fn map_leaves<M>(&self, mut f: impl FnMut(&L) -> M) -> Tree<S, M> {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match n {
                Node::Split {
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
                    cover: *cover,
                },
                Node::Leaf { value, cover } => Node::Leaf {
                    value: f(value),
                    cover: *cover,
                },
            })
            .collect();
        Tree { nodes }
    }

    pub fn remap_features(&self, map: impl Fn(usize) -> usize) -> Self
    where
        L: Clone,
    {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match n {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    cover,
                } => Node::Split {
                    feature: map(*feature),
                    threshold: *threshold,
                    left: *left,
                    right: *right,
                    cover: *cover,
                },
                Node::Leaf { value, cover } => Node::Leaf {
                    value: value.clone(),
                    cover: *cover,
                },
            })
            .collect();
        Tree { nodes }
    }
}

impl<S: Scalar> RegressionTree<S> {
    pub fn predict_row(&self, row: &[S]) -> S {
        *self.leaf_value(row)
    }

    /// Cover-weighted mean of the leaf values.
    pub fn expected_value(&self) -> S {
        let root = self.nodes[0].cover();
        if root <= S::zero() {
            return S::zero();
        }
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { value, cover } => Some(*value * *cover),
                Node::Split { .. } => None,
            })
            .sum::<S>()
            / root
    }
}
