//! Random forest: bagged CART trees on bootstrap resamples with
//! per-node feature subsampling. The score is the fraction of trees
//! voting attack, so it is a calibrated-ish vote share in [0, 1].

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ids::tree::{fit_tree, tree_prob, DecisionTree, TreeParams};
use crate::ids::IdsError;
use crate::telemetry::rng::derive_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub max_features: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: 100,
            max_features: 3,
            min_samples_leaf: 3,
            min_samples_split: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub params: ForestParams,
}

pub fn fit(
    x: &Array2<f64>,
    y: &[bool],
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel, IdsError> {
    if params.n_trees == 0 || params.max_features == 0 {
        return Err(IdsError::BadHyperparameter(
            "forest: n_trees and max_features must be >= 1".into(),
        ));
    }
    let n = x.nrows();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_split: params.min_samples_split,
        min_samples_leaf: params.min_samples_leaf,
        max_features: Some(params.max_features.min(x.ncols())),
    };
    let mut trees = Vec::with_capacity(params.n_trees);
    for t in 0..params.n_trees {
        let mut rng = derive_rng(seed, t as u64, "rf-tree");
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        trees.push(fit_tree(x, y, &idx, &tree_params, &mut rng));
    }
    Ok(ForestModel {
        trees,
        params: *params,
    })
}

pub fn predict_score_row(m: &ForestModel, row: &[f64]) -> f64 {
    let votes = m
        .trees
        .iter()
        .filter(|t| tree_prob(t, row) >= 0.5)
        .count();
    votes as f64 / m.trees.len() as f64
}

pub fn predict_scores(m: &ForestModel, x: &Array2<f64>) -> Vec<f64> {
    x.rows()
        .into_iter()
        .map(|r| predict_score_row(m, r.as_slice().expect("contiguous row")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::rng::derive_rng;
    use ndarray::Array2;

    fn blobs(n_per: usize, stream: u64) -> (Array2<f64>, Vec<bool>) {
        let mut rng = derive_rng(11, stream, "rf-test");
        let n = 2 * n_per;
        let mut x = Array2::<f64>::zeros((n, 4));
        let mut y = vec![false; n];
        for i in 0..n {
            let cls = i >= n_per;
            let center = if cls { 1.5 } else { -1.5 };
            for j in 0..4 {
                x[(i, j)] = center + rng.random_range(-1.0..1.0);
            }
            y[i] = cls;
        }
        (x, y)
    }

    #[test]
    fn separates_blobs_and_is_deterministic() {
        let (x, y) = blobs(60, 0);
        let small = ForestParams {
            n_trees: 20,
            ..Default::default()
        };
        let m1 = fit(&x, &y, &small, 7).unwrap();
        let m2 = fit(&x, &y, &small, 7).unwrap();
        let s1 = predict_scores(&m1, &x);
        assert_eq!(s1, predict_scores(&m2, &x));
        let correct = s1
            .iter()
            .zip(&y)
            .filter(|(&s, &yi)| (s >= 0.5) == yi)
            .count();
        assert!(correct as f64 / y.len() as f64 >= 0.95, "{correct}");
    }

    #[test]
    fn different_seeds_grow_different_trees() {
        let (x, y) = blobs(40, 1);
        let small = ForestParams {
            n_trees: 5,
            ..Default::default()
        };
        let m1 = fit(&x, &y, &small, 1).unwrap();
        let m2 = fit(&x, &y, &small, 2).unwrap();
        assert_ne!(m1.trees, m2.trees);
    }

    #[test]
    fn score_is_vote_fraction() {
        let (x, y) = blobs(30, 2);
        let m = fit(&x, &y, &ForestParams { n_trees: 8, ..Default::default() }, 3).unwrap();
        for s in predict_scores(&m, &x) {
            let eighths = s * 8.0;
            assert!((eighths - eighths.round()).abs() < 1e-12, "{s}");
        }
    }
}
