//! Label-stratified partitioning.

use rand::Rng;

use crate::telemetry::rng::derive_rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

fn shuffled_class_indices(labels: &[bool], seed: u64, purpose: &str) -> (Vec<usize>, Vec<usize>) {
    let mut pos: Vec<usize> = Vec::new();
    let mut neg: Vec<usize> = Vec::new();
    for (i, &y) in labels.iter().enumerate() {
        if y {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    let mut rng = derive_rng(seed, u64::MAX, purpose);
    for v in [&mut pos, &mut neg] {
        // Fisher-Yates.
        for i in (1..v.len()).rev() {
            let j = rng.random_range(0..=i);
            v.swap(i, j);
        }
    }
    (pos, neg)
}

/// Split preserving the label ratio; `test_fraction` of each class is
/// held out (rounded per class). Indices come out sorted.
pub fn stratified_split(labels: &[bool], test_fraction: f64, seed: u64) -> SplitIndices {
    assert!(
        (0.0..1.0).contains(&test_fraction),
        "test fraction must be in [0, 1)"
    );
    let (pos, neg) = shuffled_class_indices(labels, seed, "stratified-split");
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in [pos, neg] {
        let n_test = (class.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&class[..n_test]);
        train.extend_from_slice(&class[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    SplitIndices { train, test }
}

/// `k` stratified folds; every index lands in exactly one test fold.
pub fn kfold_indices(labels: &[bool], k: usize, seed: u64) -> Vec<SplitIndices> {
    assert!(k >= 2, "need at least two folds");
    let (pos, neg) = shuffled_class_indices(labels, seed, "kfold");
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for class in [pos, neg] {
        for (i, idx) in class.into_iter().enumerate() {
            folds[i % k].push(idx);
        }
    }
    (0..k)
        .map(|f| {
            let mut test = folds[f].clone();
            let mut train: Vec<usize> = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            train.sort_unstable();
            test.sort_unstable();
            SplitIndices { train, test }
        })
        .collect()
}
