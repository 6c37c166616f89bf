//! Exact path-dependent TreeSHAP.

use crate::scalar::Scalar;
use crate::tree::{Node, RegressionTree};

const NO_FEATURE: usize = usize::MAX;

#[derive(Clone, Copy)]
struct PathElement<S> {
    feature: usize,
    zero_fraction: S,
    one_fraction: S,
    weight: S,
}

/// SHAP values of one tree for `x` (length = number of features) and the
/// cover-weighted expected value.
pub fn tree_shap<S: Scalar>(tree: &RegressionTree<S>, x: &[S]) -> (Vec<S>, S) {
    let mut phi = vec![S::zero(); x.len()];
    let mut path: Vec<PathElement<S>> = Vec::new();
    recurse(tree, x, &mut phi, 0, &mut path, S::one(), S::one(), NO_FEATURE);
    (phi, tree.expected_value())
}

/// Averages [`tree_shap`] over the trees of an ensemble whose prediction is
/// the mean of its trees.
pub fn ensemble_shap<S: Scalar>(trees: &[RegressionTree<S>], x: &[S]) -> (Vec<S>, S) {
    let mut phi = vec![S::zero(); x.len()];
    let mut base = S::zero();
    for t in trees {
        let (p, b) = tree_shap(t, x);
        for (a, v) in phi.iter_mut().zip(p) {
            *a += v;
        }
        base += b;
    }
    let k = S::from_usize_lossy(trees.len().max(1));
    phi.iter_mut().for_each(|v| *v /= k);
    (phi, base / k)
}

#[allow(clippy::too_many_arguments)]
fn recurse<S: Scalar>(
    tree: &RegressionTree<S>,
    x: &[S],
    phi: &mut [S],
    node: usize,
    parent_path: &mut Vec<PathElement<S>>,
    zero_fraction: S,
    one_fraction: S,
    feature: usize,
) {
    let mut path = parent_path.clone();
    extend(&mut path, zero_fraction, one_fraction, feature);
    match &tree.nodes()[node] {
        Node::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_sum(&path, i);
                let el = path[i];
                phi[el.feature] += w * (el.one_fraction - el.zero_fraction) * *value;
            }
        }
        &Node::Split {
            feature: split,
            threshold,
            left,
            right,
            cover,
        } => {
            let (hot, cold) = if x[split] <= threshold { (left, right) } else { (right, left) };
            let nodes = tree.nodes();
            let hot_zero = nodes[hot].cover() / cover;
            let cold_zero = nodes[cold].cover() / cover;
            let mut incoming_zero = S::one();
            let mut incoming_one = S::one();
            if let Some(k) = path.iter().position(|e| e.feature == split) {
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind(&mut path, k);
            }
            recurse(tree, x, phi, hot, &mut path, hot_zero * incoming_zero, incoming_one, split);
            recurse(tree, x, phi, cold, &mut path, cold_zero * incoming_zero, S::zero(), split);
        }
    }
}

fn extend<S: Scalar>(path: &mut Vec<PathElement<S>>, zero_fraction: S, one_fraction: S, feature: usize) {
    let depth = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        weight: if depth == 0 { S::one() } else { S::zero() },
    });
    let d1 = S::from_usize_lossy(depth + 1);
    for i in (0..depth).rev() {
        let wi = path[i].weight;
        path[i + 1].weight += one_fraction * wi * S::from_usize_lossy(i + 1) / d1;
        path[i].weight = zero_fraction * wi * S::from_usize_lossy(depth - i) / d1;
    }
}

fn unwind<S: Scalar>(path: &mut Vec<PathElement<S>>, index: usize) {
    let depth = path.len() - 1;
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = S::from_usize_lossy(depth + 1);
    let mut next = path[depth].weight;
    for i in (0..depth).rev() {
        if one != S::zero() {
            let tmp = path[i].weight;
            path[i].weight = next * d1 / (S::from_usize_lossy(i + 1) * one);
            next = tmp - path[i].weight * zero * S::from_usize_lossy(depth - i) / d1;
        } else {
            path[i].weight = path[i].weight * d1 / (zero * S::from_usize_lossy(depth - i));
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

fn unwound_sum<S: Scalar>(path: &[PathElement<S>], index: usize) -> S {
    let depth = path.len() - 1;
    let one = path[index].one_fraction;
    let zero = path[index].zero_fraction;
    let d1 = S::from_usize_lossy(depth + 1);
    let mut next = path[depth].weight;
    let mut total = S::zero();
    for i in (0..depth).rev() {
        if one != S::zero() {
            let tmp = next * d1 / (S::from_usize_lossy(i + 1) * one);
            total += tmp;
            next = path[i].weight - tmp * zero * S::from_usize_lossy(depth - i) / d1;
        } else {
            total += path[i].weight / zero / (S::from_usize_lossy(depth - i) / d1);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// E[f(x) | x_S] with unobserved features integrated out by cover.
    fn conditional_value(tree: &RegressionTree<f64>, x: &[f64], known: u32, node: usize) -> f64 {
        match &tree.nodes()[node] {
            Node::Leaf { value, .. } => *value,
            &Node::Split { feature, threshold, left, right, cover } => {
                if known & (1 << feature) != 0 {
                    let next = if x[feature] <= threshold { left } else { right };
                    conditional_value(tree, x, known, next)
                } else {
                    let nodes = tree.nodes();
                    (nodes[left].cover() * conditional_value(tree, x, known, left)
                        + nodes[right].cover() * conditional_value(tree, x, known, right))
                        / cover
                }
            }
        }
    }

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    /// Shapley values by enumerating every feature subset.
    fn brute_force_shapley(tree: &RegressionTree<f64>, x: &[f64]) -> Vec<f64> {
        let m = x.len();
        let mut phi = vec![0.0; m];
        for i in 0..m {
            for s in 0u32..(1 << m) {
                if s & (1 << i) != 0 {
                    continue;
                }
                let size = s.count_ones() as usize;
                let w = factorial(size) * factorial(m - size - 1) / factorial(m);
                phi[i] += w * (conditional_value(tree, x, s | (1 << i), 0) - conditional_value(tree, x, s, 0));
            }
        }
        phi
    }

    /// Random tree of depth ≤ `max_depth` with consistent covers.
    fn arb_tree(n_features: usize, max_depth: usize) -> impl Strategy<Value = RegressionTree<f64>> {
        let spec = prop::collection::vec((0..n_features, 0.0f64..1.0, 1u32..50, -5.0f64..5.0, prop::bool::ANY), 64);
        spec.prop_map(move |draws| {
            let mut nodes: Vec<Node<f64, f64>> = Vec::new();
            let mut it = draws.into_iter();
            build(&mut nodes, &mut it, max_depth);
            RegressionTree::from_nodes(nodes)
        })
    }

    fn build(
        nodes: &mut Vec<Node<f64, f64>>,
        draws: &mut impl Iterator<Item = (usize, f64, u32, f64, bool)>,
        depth_left: usize,
    ) -> f64 {
        let (feature, threshold, cover, value, stop) = draws.next().unwrap_or((0, 0.5, 1, 0.0, true));
        let slot = nodes.len();
        if depth_left == 0 || (stop && slot > 0) {
            nodes.push(Node::Leaf { value, cover: f64::from(cover) });
            return f64::from(cover);
        }
        nodes.push(Node::Leaf { value: 0.0, cover: 0.0 });
        let left = nodes.len();
        let cl = build(nodes, draws, depth_left - 1);
        let right = nodes.len();
        let cr = build(nodes, draws, depth_left - 1);
        nodes[slot] = Node::Split { feature, threshold, left, right, cover: cl + cr };
        cl + cr
    }

    #[test]
    fn leaf_only_tree() {
        let t = RegressionTree::leaf(2.5, 10.0);
        let (phi, base) = tree_shap(&t, &[0.3, 0.7]);
        assert_eq!(phi, vec![0.0, 0.0]);
        assert_eq!(base, 2.5);
    }

    #[test]
    fn depth_two_three_features_matches_enumeration() {
        let nodes = vec![
            Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2, cover: 10.0 },
            Node::Split { feature: 1, threshold: 0.3, left: 3, right: 4, cover: 6.0 },
            Node::Split { feature: 2, threshold: 0.7, left: 5, right: 6, cover: 4.0 },
            Node::Leaf { value: 1.0, cover: 2.0 },
            Node::Leaf { value: 4.0, cover: 4.0 },
            Node::Leaf { value: -2.0, cover: 1.0 },
            Node::Leaf { value: 3.0, cover: 3.0 },
        ];
        let t = RegressionTree::from_nodes(nodes);
        for x in [[0.2, 0.1, 0.9], [0.8, 0.5, 0.1], [0.5, 0.3, 0.7]] {
            let (phi, base) = tree_shap(&t, &x);
            let oracle = brute_force_shapley(&t, &x);
            for (a, b) in phi.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9, "{phi:?} vs {oracle:?}");
            }
            let total: f64 = phi.iter().sum::<f64>() + base;
            assert!((total - t.predict_row(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_feature_on_path() {
        let nodes = vec![
            Node::Split { feature: 0, threshold: 0.5, left: 1, right: 2, cover: 8.0 },
            Node::Split { feature: 0, threshold: 0.2, left: 3, right: 4, cover: 5.0 },
            Node::Leaf { value: 7.0, cover: 3.0 },
            Node::Leaf { value: 1.0, cover: 2.0 },
            Node::Leaf { value: -1.0, cover: 3.0 },
        ];
        let t = RegressionTree::from_nodes(nodes);
        let x = [0.1, 0.4];
        let (phi, _) = tree_shap(&t, &x);
        let oracle = brute_force_shapley(&t, &x);
        assert!((phi[0] - oracle[0]).abs() < 1e-12);
        assert_eq!(phi[1], 0.0);
    }

    proptest! {
        #[test]
        fn matches_enumeration_on_random_trees(
            tree in arb_tree(5, 3),
            x in prop::array::uniform5(0.0f64..1.0),
        ) {
            let (phi, base) = tree_shap(&tree, &x);
            let oracle = brute_force_shapley(&tree, &x);
            for (a, b) in phi.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            prop_assert!((phi.iter().sum::<f64>() + base - tree.predict_row(&x)).abs() < 1e-9);
            let used = tree.split_features();
            for (j, p) in phi.iter().enumerate() {
                if !used.contains(&j) {
                    prop_assert_eq!(*p, 0.0);
                }
            }
        }
    }
}
