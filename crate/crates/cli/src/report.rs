//! Rendering of matrix results: a machine-readable results.csv and
//! aligned text tables, one per scheme, with the best algorithm per
//! setting flagged.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{Context, Result};

use crate::experiment::CellResult;
use pvs_core::attack::SettingId;
use pvs_core::ids::Algorithm;

pub fn write_results_csv(path: &Path, cells: &[CellResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record([
        "setting",
        "algorithm",
        "scheme",
        "n_train",
        "n_test",
        "tp",
        "fp",
        "tn",
        "fn",
        "accuracy",
        "precision",
        "recall",
        "f1",
        "jaccard",
        "roc_auc",
        "pr_auc",
        "train_seconds",
        "eval_seconds",
    ])?;
    for c in cells {
        let e = &c.eval;
        w.write_record([
            c.setting.to_string(),
            c.algorithm.to_string(),
            c.scheme.to_string(),
            c.n_train.to_string(),
            c.n_test.to_string(),
            e.tp.to_string(),
            e.fp.to_string(),
            e.tn.to_string(),
            e.fn_.to_string(),
            fmt_f(e.accuracy),
            e.precision.map(fmt_f).unwrap_or_default(),
            fmt_f(e.recall),
            fmt_f(e.f1),
            fmt_f(e.jaccard),
            fmt_f(e.roc_auc),
            fmt_f(e.pr_auc),
            format!("{:.3}", c.train_seconds),
            format!("{:.3}", c.eval_seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v:.6}")
    }
}

fn cell_of(
    cells: &[CellResult],
    setting: SettingId,
    algorithm: Algorithm,
    scheme: u8,
) -> Option<&CellResult> {
    cells
        .iter()
        .find(|c| c.setting == setting && c.algorithm == algorithm && c.scheme == scheme)
}

/// One accuracy table per scheme; `*` marks the most accurate algorithm
/// for each setting column.
pub fn accuracy_tables(cells: &[CellResult]) -> String {
    let schemes: BTreeSet<u8> = cells.iter().map(|c| c.scheme).collect();
    let settings: BTreeSet<SettingId> = cells.iter().map(|c| c.setting).collect();
    let algorithms: Vec<Algorithm> = {
        let mut seen = Vec::new();
        for c in cells {
            if !seen.contains(&c.algorithm) {
                seen.push(c.algorithm);
            }
        }
        seen
    };
    let descriptions = [
        (1u8, "train complete, test complete"),
        (2, "train complete, test missing-data"),
        (3, "train missing-data, test missing-data"),
    ];
    let mut out = String::new();
    for &scheme in &schemes {
        let desc = descriptions
            .iter()
            .find(|(n, _)| *n == scheme)
            .map(|(_, d)| *d)
            .unwrap_or("");
        out.push_str(&format!("Scheme {scheme} ({desc}), test accuracy\n"));
        out.push_str(&format!("{:<6}", "algo"));
        for s in &settings {
            out.push_str(&format!("{:>10}", s.to_string()));
        }
        out.push('\n');
        // Best algorithm per setting within this scheme.
        let best: Vec<Option<Algorithm>> = settings
            .iter()
            .map(|&s| {
                algorithms
                    .iter()
                    .copied()
                    .filter_map(|a| cell_of(cells, s, a, scheme).map(|c| (a, c.eval.accuracy)))
                    .max_by(|x, y| x.1.total_cmp(&y.1))
                    .map(|(a, _)| a)
            })
            .collect();
        for &a in &algorithms {
            out.push_str(&format!("{:<6}", a.to_string()));
            for (si, &s) in settings.iter().enumerate() {
                match cell_of(cells, s, a, scheme) {
                    Some(c) => {
                        let flag = if best[si] == Some(a) { "*" } else { " " };
                        out.push_str(&format!("{:>9.4}{flag}", c.eval.accuracy));
                    }
                    None => out.push_str(&format!("{:>10}", "-")),
                }
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
