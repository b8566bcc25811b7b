//! k-nearest-neighbors classifier over standardized features,
//! Euclidean metric, brute-force search. The model is the training set.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::ids::IdsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    /// Standardized training matrix, row-major.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<bool>,
}

pub fn fit(x: &Array2<f64>, y: &[bool], params: &KnnParams) -> Result<KnnModel, IdsError> {
    if params.k == 0 {
        return Err(IdsError::BadHyperparameter("knn: k must be >= 1".into()));
    }
    if params.k > x.nrows() {
        return Err(IdsError::BadHyperparameter(format!(
            "knn: k={} exceeds {} training rows",
            params.k,
            x.nrows()
        )));
    }
    Ok(KnnModel {
        k: params.k,
        x: x.rows().into_iter().map(|r| r.to_vec()).collect(),
        y: y.to_vec(),
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&u, &v)| (u - v) * (u - v)).sum()
}

/// Indices of the k nearest training rows, closest first. Distance ties
/// break toward the lower row index, keeping scores deterministic.
fn k_nearest(m: &KnnModel, row: &[f64]) -> Vec<usize> {
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(m.k + 1);
    for (i, train_row) in m.x.iter().enumerate() {
        let d = sq_dist(row, train_row);
        if best.len() == m.k {
            let worst = best[m.k - 1];
            if d > worst.0 || (d == worst.0 && i > worst.1) {
                continue;
            }
        }
        let pos = best.partition_point(|&(bd, bi)| bd < d || (bd == d && bi < i));
        best.insert(pos, (d, i));
        best.truncate(m.k);
    }
    best.into_iter().map(|(_, i)| i).collect()
}

/// Score in [0, 1]: the positive fraction among the k neighbors; an
/// exact tie defers to the single nearest neighbor, landing the score
/// strictly on its side of 0.5 without saturating it.
pub fn predict_score_row(m: &KnnModel, row: &[f64]) -> f64 {
    let near = k_nearest(m, row);
    let pos = near.iter().filter(|&&i| m.y[i]).count();
    let frac = pos as f64 / m.k as f64;
    if frac == 0.5 {
        let nearest = m.y[near[0]] as u8 as f64;
        (0.5 + nearest) / 2.0
    } else {
        frac
    }
}

pub fn predict_scores(m: &KnnModel, x: &Array2<f64>) -> Vec<f64> {
    x.rows()
        .into_iter()
        .map(|r| predict_score_row(m, r.as_slice().expect("contiguous row")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::rng::derive_rng;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn two_clusters_classified() {
        let x = array![[0.0, 0.0], [0.1, 0.0], [0.0, 0.1], [5.0, 5.0], [5.1, 5.0], [5.0, 5.1]];
        let y = [false, false, false, true, true, true];
        let m = fit(&x, &y, &KnnParams::default()).unwrap();
        let q = array![[0.05, 0.05], [5.05, 5.05]];
        let s = predict_scores(&m, &q);
        assert!(s[0] < 0.5, "{}", s[0]);
        assert!(s[1] >= 0.5, "{}", s[1]);
    }

    #[test]
    fn tie_defers_to_nearest_neighbor() {
        // k=2 neighborhoods here always hold one of each class.
        let x = array![[0.0], [1.0]];
        let y = [false, true];
        let m = fit(&x, &y, &KnnParams { k: 2 }).unwrap();
        let s = predict_scores(&m, &array![[0.2], [0.8]]);
        assert_eq!(s[0], 0.25);
        assert_eq!(s[1], 0.75);
    }

    /// Full-sort reference search; the incremental insertion in
    /// k_nearest must agree on every query.
    fn nearest_oracle(m: &KnnModel, row: &[f64]) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = m
            .x
            .iter()
            .enumerate()
            .map(|(i, t)| (sq_dist(row, t), i))
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        all.truncate(m.k);
        all.into_iter().map(|(_, i)| i).collect()
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = derive_rng(9, 0, "knn-oracle");
        for k in [1usize, 2, 3, 5] {
            let n = 60;
            let d = 4;
            let mut x = Array2::<f64>::zeros((n, d));
            let mut y = vec![false; n];
            for i in 0..n {
                for j in 0..d {
                    // Coarse grid so exact distance ties actually occur.
                    x[(i, j)] = (rng.random_range(-4i32..=4) as f64) * 0.5;
                }
                y[i] = rng.random_range(0.0..1.0) < 0.4;
            }
            let m = fit(&x, &y, &KnnParams { k }).unwrap();
            for _ in 0..50 {
                let q: Vec<f64> = (0..d)
                    .map(|_| (rng.random_range(-4i32..=4) as f64) * 0.5)
                    .collect();
                assert_eq!(k_nearest(&m, &q), nearest_oracle(&m, &q), "k={k} q={q:?}");
            }
        }
    }

    #[test]
    fn k_larger_than_train_rejected() {
        let x = array![[0.0], [1.0]];
        assert!(fit(&x, &[false, true], &KnnParams { k: 3 }).is_err());
    }
}
