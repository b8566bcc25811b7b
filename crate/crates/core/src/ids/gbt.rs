//! Gradient-boosted classification trees on binned features. Each
//! round fits a small tree to the logistic residuals y - p with
//! second-order (Newton) leaf values sum(g)/sum(h), h = p (1 - p).
//! Split search runs on 256-bin histograms, so fit cost per node is
//! O(samples + bins) per feature rather than a sort.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ids::IdsError;
use crate::telemetry::rng::derive_rng;

const HESS_EPS: f64 = 1e-12;
const LEAF_CLIP: f64 = 10.0;
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// Features tried per node.
    pub max_features: usize,
    pub n_bins: usize,
    /// Seed of the per-node feature subsampling stream. Part of the
    /// hyperparameters, not of the dataset seed, so two trainings on
    /// the same data are identical by construction.
    pub feature_seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_estimators: 1750,
            learning_rate: 0.01,
            max_depth: 4,
            max_features: 2,
            n_bins: 256,
            feature_seed: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BinNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        /// Rows go left when their bin index <= bin.
        bin: u8,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinTree {
    pub nodes: Vec<BinNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    /// Ascending cut values per feature; a raw value's bin is the count
    /// of edges <= it.
    pub bin_edges: Vec<Vec<f64>>,
    pub prior: f64,
    pub trees: Vec<BinTree>,
    pub params: GbtParams,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Equal-frequency cut points, at most n_bins - 1 of them, deduplicated
/// so repeated values never straddle an edge.
fn feature_edges(mut vals: Vec<f64>, n_bins: usize) -> Vec<f64> {
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = vals.len();
    let mut uniq = vals.clone();
    uniq.dedup();
    let mut edges: Vec<f64> = if uniq.len() <= n_bins {
        uniq.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect()
    } else {
        (1..n_bins)
            .map(|b| {
                let r = b * n / n_bins;
                vals[r - 1] + (vals[r] - vals[r - 1]) / 2.0
            })
            .collect()
    };
    edges.dedup();
    edges
}

fn bin_value(edges: &[f64], v: f64) -> u8 {
    edges.partition_point(|&e| e <= v) as u8
}

/// Row-major n x d bin indices.
fn bin_matrix(x: &Array2<f64>, edges: &[Vec<f64>]) -> Vec<u8> {
    let (n, d) = x.dim();
    let mut out = vec![0u8; n * d];
    for i in 0..n {
        for j in 0..d {
            out[i * d + j] = bin_value(&edges[j], x[(i, j)]);
        }
    }
    out
}

struct TreeFit<'a> {
    bins: &'a [u8],
    d: usize,
    grad: &'a [f64],
    hess: &'a [f64],
    params: GbtParams,
    nodes: Vec<BinNode>,
}

impl<'a> TreeFit<'a> {
    fn leaf(&mut self, g: f64, h: f64) -> usize {
        let value = (g / (h + HESS_EPS)).clamp(-LEAF_CLIP, LEAF_CLIP);
        self.nodes.push(BinNode::Leaf { value });
        self.nodes.len() - 1
    }

    fn build(&mut self, idx: &[u32], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let g_tot: f64 = idx.iter().map(|&i| self.grad[i as usize]).sum();
        let h_tot: f64 = idx.iter().map(|&i| self.hess[i as usize]).sum();
        if depth >= self.params.max_depth || idx.len() < 2 {
            return self.leaf(g_tot, h_tot);
        }
        let mut feats: Vec<usize> = (0..self.d).collect();
        if self.params.max_features < self.d {
            feats.shuffle(rng);
            feats.truncate(self.params.max_features);
            feats.sort_unstable();
        }
        let parent_score = g_tot * g_tot / (h_tot + HESS_EPS);
        let mut best: Option<(f64, usize, u8)> = None;
        let mut hist = vec![(0.0f64, 0.0f64, 0u32); self.params.n_bins];
        for &f in &feats {
            hist.iter_mut().for_each(|s| *s = (0.0, 0.0, 0));
            for &i in idx {
                let b = self.bins[i as usize * self.d + f] as usize;
                let s = &mut hist[b];
                s.0 += self.grad[i as usize];
                s.1 += self.hess[i as usize];
                s.2 += 1;
            }
            let total: u32 = idx.len() as u32;
            let mut gl = 0.0;
            let mut hl = 0.0;
            let mut cl = 0u32;
            for cut in 0..self.params.n_bins - 1 {
                gl += hist[cut].0;
                hl += hist[cut].1;
                cl += hist[cut].2;
                if cl == 0 {
                    continue;
                }
                if cl == total {
                    break;
                }
                let gr = g_tot - gl;
                let hr = h_tot - hl;
                let gain =
                    gl * gl / (hl + HESS_EPS) + gr * gr / (hr + HESS_EPS) - parent_score;
                if gain > MIN_GAIN && best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, f, cut as u8));
                }
            }
        }
        let Some((_, feature, bin)) = best else {
            return self.leaf(g_tot, h_tot);
        };
        let (li, ri): (Vec<u32>, Vec<u32>) = idx
            .iter()
            .partition(|&&i| self.bins[i as usize * self.d + feature] <= bin);
        let at = self.nodes.len();
        self.nodes.push(BinNode::Split {
            feature,
            bin,
            left: 0,
            right: 0,
        });
        let l = self.build(&li, depth + 1, rng);
        let r = self.build(&ri, depth + 1, rng);
        if let BinNode::Split { left, right, .. } = &mut self.nodes[at] {
            *left = l;
            *right = r;
        }
        at
    }
}

fn tree_value(tree: &BinTree, row_bins: &[u8]) -> f64 {
    let mut at = 0usize;
    loop {
        match &tree.nodes[at] {
            BinNode::Leaf { value } => return *value,
            BinNode::Split {
                feature,
                bin,
                left,
                right,
            } => {
                at = if row_bins[*feature] <= *bin { *left } else { *right };
            }
        }
    }
}

pub fn fit(x: &Array2<f64>, y: &[bool], params: &GbtParams) -> Result<GbtModel, IdsError> {
    if params.n_estimators == 0
        || params.learning_rate <= 0.0
        || params.max_features == 0
        || params.n_bins < 2
        || params.n_bins > 256
    {
        return Err(IdsError::BadHyperparameter(
            "gbt: need n_estimators >= 1, learning_rate > 0, max_features >= 1, 2 <= n_bins <= 256"
                .into(),
        ));
    }
    let (n, d) = x.dim();
    let edges: Vec<Vec<f64>> = (0..d)
        .map(|j| feature_edges(x.column(j).to_vec(), params.n_bins))
        .collect();
    let bins = bin_matrix(x, &edges);
    let pos = y.iter().filter(|&&b| b).count() as f64;
    let p0 = (pos / n as f64).clamp(1e-6, 1.0 - 1e-6);
    let prior = (p0 / (1.0 - p0)).ln();

    let mut f_val = vec![prior; n];
    let mut grad = vec![0.0f64; n];
    let mut hess = vec![0.0f64; n];
    let all: Vec<u32> = (0..n as u32).collect();
    let mut trees = Vec::with_capacity(params.n_estimators);
    for t in 0..params.n_estimators {
        for i in 0..n {
            let p = sigmoid(f_val[i]);
            grad[i] = (y[i] as u8 as f64) - p;
            hess[i] = p * (1.0 - p);
        }
        let mut rng = derive_rng(params.feature_seed, t as u64, "gbt-feat");
        let mut fitter = TreeFit {
            bins: &bins,
            d,
            grad: &grad,
            hess: &hess,
            params: *params,
            nodes: Vec::new(),
        };
        fitter.build(&all, 0, &mut rng);
        let tree = BinTree { nodes: fitter.nodes };
        for i in 0..n {
            f_val[i] += params.learning_rate * tree_value(&tree, &bins[i * d..(i + 1) * d]);
        }
        trees.push(tree);
    }
    Ok(GbtModel {
        bin_edges: edges,
        prior,
        trees,
        params: *params,
    })
}

pub fn predict_score_row(m: &GbtModel, row: &[f64]) -> f64 {
    let row_bins: Vec<u8> = row
        .iter()
        .enumerate()
        .map(|(j, &v)| bin_value(&m.bin_edges[j], v))
        .collect();
    let mut z = m.prior;
    for tree in &m.trees {
        z += m.params.learning_rate * tree_value(tree, &row_bins);
    }
    sigmoid(z)
}

pub fn predict_scores(m: &GbtModel, x: &Array2<f64>) -> Vec<f64> {
    x.rows()
        .into_iter()
        .map(|r| predict_score_row(m, r.as_slice().expect("contiguous row")))
        .collect()
}
