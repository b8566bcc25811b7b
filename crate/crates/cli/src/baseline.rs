//! Reference classifiers the learned models must beat: the majority
//! label, and the best single-threshold rule on one scalar channel.
//! The threshold baselines are also how spoofing is demonstrated; a
//! spoofed plant reading should carry no usable threshold at all.

use anyhow::{ensure, Result};

use pvs_core::ids::LabeledData;
use pvs_core::telemetry::FEATURE_NAMES;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    Accuracy,
    /// Mean of per-class recalls; insensitive to the 80/20 imbalance.
    BalancedAccuracy,
}

#[derive(Debug, Clone, Copy)]
pub struct ThresholdRule {
    pub threshold: f64,
    /// Predict attack when the value is strictly above the threshold
    /// (below, when false).
    pub positive_above: bool,
}

impl ThresholdRule {
    pub fn predict(&self, value: f64) -> bool {
        if self.positive_above {
            value > self.threshold
        } else {
            value < self.threshold
        }
    }
}

fn score(tp: usize, tn: usize, pos: usize, neg: usize, objective: Objective) -> f64 {
    match objective {
        Objective::Accuracy => (tp + tn) as f64 / (pos + neg) as f64,
        Objective::BalancedAccuracy => {
            let rec_p = if pos == 0 { 0.0 } else { tp as f64 / pos as f64 };
            let rec_n = if neg == 0 { 0.0 } else { tn as f64 / neg as f64 };
            (rec_p + rec_n) / 2.0
        }
    }
}

/// Exhaustive best cut on one channel: every midpoint between adjacent
/// distinct sorted values, both directions, plus the two all-one-class
/// rules. Returns the rule and its training objective value.
pub fn fit_threshold(
    values: &[f64],
    labels: &[bool],
    objective: Objective,
) -> Result<(ThresholdRule, f64)> {
    ensure!(
        values.len() == labels.len() && !values.is_empty(),
        "threshold fit needs equal-length, nonempty inputs"
    );
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;

    // Sweep cut points left to right; below[0..k] counts positives among
    // the k smallest values. "positive above t" then has
    // tp = pos - below, tn = k - (neg-part below)... tracked directly.
    let mut pos_below = 0usize;
    let mut best_rule = ThresholdRule {
        threshold: f64::NEG_INFINITY,
        positive_above: true,
    };
    // All-positive rule as the starting point.
    let mut best_score = score(pos, 0, pos, neg, objective);
    let all_neg = score(0, neg, pos, neg, objective);
    if all_neg > best_score {
        best_rule = ThresholdRule {
            threshold: f64::INFINITY,
            positive_above: true,
        };
        best_score = all_neg;
    }
    for k in 1..order.len() {
        if labels[order[k - 1]] {
            pos_below += 1;
        }
        let (lo, hi) = (values[order[k - 1]], values[order[k]]);
        if lo == hi {
            continue;
        }
        let neg_below = k - pos_below;
        let t = lo + (hi - lo) / 2.0;
        // Attack above the cut.
        let s_above = score(pos - pos_below, neg_below, pos, neg, objective);
        if s_above > best_score {
            best_rule = ThresholdRule {
                threshold: t,
                positive_above: true,
            };
            best_score = s_above;
        }
        // Attack below the cut.
        let s_below = score(pos_below, neg - neg_below, pos, neg, objective);
        if s_below > best_score {
            best_rule = ThresholdRule {
                threshold: t,
                positive_above: false,
            };
            best_score = s_below;
        }
    }
    Ok((best_rule, best_score))
}

pub fn evaluate_threshold(
    rule: &ThresholdRule,
    values: &[f64],
    labels: &[bool],
    objective: Objective,
) -> f64 {
    let mut tp = 0;
    let mut tn = 0;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    for (&v, &y) in values.iter().zip(labels) {
        match (rule.predict(v), y) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            _ => {}
        }
    }
    score(tp, tn, pos, neg, objective)
}

#[derive(Debug, Clone)]
pub struct ChannelBaseline {
    pub name: String,
    pub rule: ThresholdRule,
    pub train_score: f64,
    pub test_accuracy: f64,
    pub test_balanced_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct BaselineReport {
    pub majority_label: bool,
    pub majority_test_accuracy: f64,
    pub channels: Vec<ChannelBaseline>,
}

impl BaselineReport {
    pub fn best_channel_accuracy(&self) -> f64 {
        self.channels
            .iter()
            .map(|c| c.test_accuracy)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Single-channel threshold baselines over the columns of `train`,
/// fitted per channel on the train rows and measured on the test rows.
pub fn feature_baselines(
    train: &LabeledData,
    test: &LabeledData,
    objective: Objective,
) -> Result<BaselineReport> {
    ensure!(
        train.n_features() == test.n_features(),
        "train/test feature arity mismatch"
    );
    let majority_label = 2 * train.n_positive() >= train.len();
    let majority_test_accuracy = test
        .y
        .iter()
        .filter(|&&y| y == majority_label)
        .count() as f64
        / test.len() as f64;
    let mut channels = Vec::new();
    for j in 0..train.n_features() {
        let name = FEATURE_NAMES
            .get(j)
            .map(|s| s.to_string())
            .unwrap_or_else(|| format!("f{j}"));
        let tr: Vec<f64> = train.x.column(j).to_vec();
        let te: Vec<f64> = test.x.column(j).to_vec();
        let (rule, train_score) = fit_threshold(&tr, &train.y, objective)?;
        channels.push(ChannelBaseline {
            name,
            rule,
            train_score,
            test_accuracy: evaluate_threshold(&rule, &te, &test.y, Objective::Accuracy),
            test_balanced_accuracy: evaluate_threshold(
                &rule,
                &te,
                &test.y,
                Objective::BalancedAccuracy,
            ),
        });
    }
    Ok(BaselineReport {
        majority_label,
        majority_test_accuracy,
        channels,
    })
}

pub fn render_baselines(report: &BaselineReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "majority baseline: always '{}', test accuracy {:.4}\n",
        if report.majority_label { "attack" } else { "normal" },
        report.majority_test_accuracy
    ));
    out.push_str(&format!(
        "{:<10}{:>14}{:>8}{:>12}{:>14}\n",
        "channel", "threshold", "dir", "test acc", "test bal-acc"
    ));
    for c in &report.channels {
        out.push_str(&format!(
            "{:<10}{:>14.4}{:>8}{:>12.4}{:>14.4}\n",
            c.name,
            c.rule.threshold,
            if c.rule.positive_above { ">" } else { "<" },
            c.test_accuracy,
            c.test_balanced_accuracy
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_a_perfect_cut() {
        let values = [1.0, 2.0, 3.0, 10.0, 11.0];
        let labels = [false, false, false, true, true];
        let (rule, s) = fit_threshold(&values, &labels, Objective::Accuracy).unwrap();
        assert_eq!(s, 1.0);
        assert!(rule.positive_above);
        assert!(rule.threshold > 3.0 && rule.threshold < 10.0);
        assert_eq!(
            evaluate_threshold(&rule, &values, &labels, Objective::Accuracy),
            1.0
        );
    }

    #[test]
    fn direction_flips_when_attacks_sit_low() {
        let values = [1.0, 2.0, 8.0, 9.0];
        let labels = [true, true, false, false];
        let (rule, s) = fit_threshold(&values, &labels, Objective::Accuracy).unwrap();
        assert_eq!(s, 1.0);
        assert!(!rule.positive_above);
    }

    #[test]
    fn uninformative_channel_scores_half_balanced() {
        // Same value everywhere: only the constant rules exist, and
        // balanced accuracy for those is exactly 0.5.
        let values = [4.0; 10];
        let labels = [true, false, true, false, true, false, true, false, true, false];
        let (_, s) = fit_threshold(&values, &labels, Objective::BalancedAccuracy).unwrap();
        assert_eq!(s, 0.5);
    }

    #[test]
    fn balanced_objective_ignores_imbalance() {
        // 8 normals at 0, 2 attacks at 1: majority rule has accuracy
        // 0.8 but balanced accuracy 0.5; the cut gets 1.0 on both.
        let values = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0];
        let mut labels = [false; 10];
        labels[8] = true;
        labels[9] = true;
        let (rule, s) = fit_threshold(&values, &labels, Objective::BalancedAccuracy).unwrap();
        assert_eq!(s, 1.0);
        assert!(rule.predict(1.0));
        assert!(!rule.predict(0.0));
    }
}
