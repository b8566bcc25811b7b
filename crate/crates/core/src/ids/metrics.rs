//! Binary-classification metrics over attack scores.

use serde::{Deserialize, Serialize};

pub const DECISION_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub accuracy: f64,
    /// None when nothing was predicted positive.
    pub precision: Option<f64>,
    pub recall: f64,
    pub f1: f64,
    /// tp / (tp + fp + fn): intersection over union of the attack sets.
    pub jaccard: f64,
    pub roc_auc: f64,
    pub pr_auc: f64,
}

/// Score each frame's attack probability against the labels; decisions at
/// `DECISION_THRESHOLD`, rank metrics on the raw scores.
pub fn evaluate_scores(scores: &[f64], labels: &[bool]) -> Evaluation {
    assert_eq!(scores.len(), labels.len(), "scores and labels must align");
    assert!(!scores.is_empty(), "cannot evaluate an empty set");
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= DECISION_THRESHOLD, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let n = scores.len() as f64;
    let accuracy = (tp + tn) as f64 / n;
    let precision = if tp + fp > 0 {
        Some(tp as f64 / (tp + fp) as f64)
    } else {
        None
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f1 = match precision {
        Some(p) if p + recall > 0.0 => 2.0 * p * recall / (p + recall),
        _ => 0.0,
    };
    let jaccard = if tp + fp + fn_ > 0 {
        tp as f64 / (tp + fp + fn_) as f64
    } else {
        0.0
    };
    Evaluation {
        tp,
        fp,
        tn,
        fn_,
        accuracy,
        precision,
        recall,
        f1,
        jaccard,
        roc_auc: roc_auc(scores, labels),
        pr_auc: pr_auc(scores, labels),
    }
}

/// Indices sorted by score descending; ties keep input order.
fn rank_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx
}

/// Area under the ROC curve by trapezoid over distinct score thresholds.
/// Equals the Mann-Whitney probability with ties counted half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let pos = labels.iter().filter(|&&y| y).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return 0.5;
    }
    let order = rank_order(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut prev_tpr, mut prev_fpr) = (0.0f64, 0.0f64);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        // Consume the whole tie group before emitting a curve point.
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let tpr = tp as f64 / pos as f64;
        let fpr = fp as f64 / neg as f64;
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
        prev_tpr = tpr;
        prev_fpr = fpr;
    }
    auc
}

/// Area under the precision-recall curve, trapezoid between the points at
/// distinct thresholds, anchored at recall 0 with the first precision.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let pos = labels.iter().filter(|&&y| y).count();
    if pos == 0 || pos == labels.len() {
        return f64::NAN;
    }
    let order = rank_order(scores);
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut prev_recall = 0.0f64;
    let mut prev_precision: Option<f64> = None;
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        let anchor = prev_precision.unwrap_or(precision);
        auc += (recall - prev_recall) * (precision + anchor) / 2.0;
        prev_recall = recall;
        prev_precision = Some(precision);
    }
    auc
}
