//! Binary CART classification tree: exact threshold search over sorted
//! feature values, Gini impurity, optional per-node feature subsampling.
//! Building block for the random forest.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features tried per node; None means all.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 100,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        /// Positive-class fraction of the training rows in this leaf.
        prob: f64,
        n: usize,
    },
    Split {
        feature: usize,
        /// Rows go left when x[feature] <= threshold.
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    /// Node 0 is the root; children index into this vector.
    pub nodes: Vec<Node>,
}

struct Builder<'a> {
    x: &'a Array2<f64>,
    y: &'a [bool],
    params: TreeParams,
    nodes: Vec<Node>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

impl<'a> Builder<'a> {
    /// Cheapest weighted-Gini threshold on one feature, or None if no
    /// cut leaves min_samples_leaf rows on both sides.
    fn best_on_feature(&self, idx: &[usize], feature: usize) -> Option<BestSplit> {
        let mut order: Vec<usize> = idx.to_vec();
        order.sort_by(|&a, &b| {
            self.x[(a, feature)]
                .partial_cmp(&self.x[(b, feature)])
                .unwrap()
                .then(a.cmp(&b))
        });
        let n = order.len();
        let total_pos = order.iter().filter(|&&i| self.y[i]).count();
        let mut left_pos = 0usize;
        let mut best: Option<BestSplit> = None;
        for cut in 1..n {
            if self.y[order[cut - 1]] {
                left_pos += 1;
            }
            let v_prev = self.x[(order[cut - 1], feature)];
            let v_here = self.x[(order[cut], feature)];
            if v_prev == v_here {
                continue;
            }
            if cut < self.params.min_samples_leaf || n - cut < self.params.min_samples_leaf {
                continue;
            }
            let imp = (cut as f64 * gini(left_pos, cut)
                + (n - cut) as f64 * gini(total_pos - left_pos, n - cut))
                / n as f64;
            if best.as_ref().is_none_or(|b| imp < b.impurity) {
                best = Some(BestSplit {
                    feature,
                    threshold: v_prev + (v_here - v_prev) / 2.0,
                    impurity: imp,
                });
            }
        }
        best
    }

    fn build(&mut self, idx: &[usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let n = idx.len();
        let pos = idx.iter().filter(|&&i| self.y[i]).count();
        let leaf = |nodes: &mut Vec<Node>| {
            nodes.push(Node::Leaf {
                prob: pos as f64 / n as f64,
                n,
            });
            nodes.len() - 1
        };
        if depth >= self.params.max_depth
            || n < self.params.min_samples_split
            || pos == 0
            || pos == n
        {
            return leaf(&mut self.nodes);
        }
        let d = self.x.ncols();
        let mut feats: Vec<usize> = (0..d).collect();
        if let Some(m) = self.params.max_features {
            if m < d {
                feats.shuffle(rng);
                feats.truncate(m);
                // Index order keeps equal-impurity ties deterministic.
                feats.sort_unstable();
            }
        }
        let mut best: Option<BestSplit> = None;
        for &f in &feats {
            if let Some(cand) = self.best_on_feature(idx, f) {
                if best.as_ref().is_none_or(|b| cand.impurity < b.impurity) {
                    best = Some(cand);
                }
            }
        }
        // Zero-gain splits are allowed on purpose: greedy Gini sees no
        // first-cut improvement on parity-like patterns, yet the cut
        // unlocks pure children one level down.
        let Some(split) = best else {
            return leaf(&mut self.nodes);
        };
        let (li, ri): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x[(i, split.feature)] <= split.threshold);
        let at = self.nodes.len();
        self.nodes.push(Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: 0,
            right: 0,
        });
        let l = self.build(&li, depth + 1, rng);
        let r = self.build(&ri, depth + 1, rng);
        if let Node::Split { left, right, .. } = &mut self.nodes[at] {
            *left = l;
            *right = r;
        }
        at
    }
}

pub fn fit_tree(
    x: &Array2<f64>,
    y: &[bool],
    idx: &[usize],
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> DecisionTree {
    let mut b = Builder {
        x,
        y,
        params: *params,
        nodes: Vec::new(),
    };
    b.build(idx, 0, rng);
    DecisionTree { nodes: b.nodes }
}

pub fn tree_prob(tree: &DecisionTree, row: &[f64]) -> f64 {
    let mut at = 0usize;
    loop {
        match &tree.nodes[at] {
            Node::Leaf { prob, .. } => return *prob,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                at = if row[*feature] <= *threshold { *left } else { *right };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::rng::derive_rng;
    use ndarray::array;

    fn full() -> TreeParams {
        TreeParams::default()
    }

    #[test]
    fn pure_node_becomes_leaf() {
        let x = array![[0.0], [1.0], [2.0]];
        let y = [true, true, true];
        let mut rng = derive_rng(0, 0, "tree");
        let t = fit_tree(&x, &y, &[0, 1, 2], &full(), &mut rng);
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(tree_prob(&t, &[5.0]), 1.0);
    }

    #[test]
    fn learns_xor() {
        // Depth 2 is necessary and sufficient: no single axis cut helps.
        let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = [false, true, true, false];
        let mut rng = derive_rng(0, 1, "tree");
        let t = fit_tree(&x, &y, &[0, 1, 2, 3], &full(), &mut rng);
        for (i, &yi) in y.iter().enumerate() {
            let p = tree_prob(&t, x.row(i).as_slice().unwrap());
            assert_eq!(p >= 0.5, yi, "row {i}");
        }
    }

    /// Hand-computed best split. Feature 0 values 1,2,3,4 with labels
    /// F,F,T,T: the 2.5 cut is pure, weighted Gini 0. Feature 1 is
    /// constant and must be ignored.
    #[test]
    fn picks_hand_computed_gini_split() {
        let x = array![[1.0, 7.0], [2.0, 7.0], [3.0, 7.0], [4.0, 7.0]];
        let y = [false, false, true, true];
        let mut rng = derive_rng(0, 2, "tree");
        let t = fit_tree(&x, &y, &[0, 1, 2, 3], &full(), &mut rng);
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert!((threshold - 2.5).abs() < 1e-12);
            }
            other => panic!("expected split at root, got {other:?}"),
        }
        assert_eq!(t.nodes.len(), 3);
    }

    #[test]
    fn min_samples_leaf_blocks_narrow_cuts() {
        // The pure 1|234 cut wins on impurity but strands one row, so
        // the 12|34 cut has to be chosen, and no leaf may go below two
        // samples.
        let x = array![[1.0], [2.0], [3.0], [4.0]];
        let y = [true, false, false, false];
        let mut rng = derive_rng(0, 3, "tree");
        let params = TreeParams {
            min_samples_leaf: 2,
            ..full()
        };
        let t = fit_tree(&x, &y, &[0, 1, 2, 3], &params, &mut rng);
        match &t.nodes[0] {
            Node::Split { threshold, .. } => assert!((threshold - 2.5).abs() < 1e-12),
            other => panic!("expected split at root, got {other:?}"),
        }
        for node in &t.nodes {
            if let Node::Leaf { n, .. } = node {
                assert!(*n >= 2, "{:?}", t.nodes);
            }
        }
    }

    #[test]
    fn max_depth_zero_is_a_prior_stump() {
        let x = array![[0.0], [1.0]];
        let y = [false, true];
        let mut rng = derive_rng(0, 4, "tree");
        let params = TreeParams { max_depth: 0, ..full() };
        let t = fit_tree(&x, &y, &[0, 1], &params, &mut rng);
        assert_eq!(tree_prob(&t, &[0.0]), 0.5);
    }
}
