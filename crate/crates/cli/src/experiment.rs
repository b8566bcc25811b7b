//! The full detection experiment: for each control setting, train every
//! classifier and evaluate it under three data regimes ("schemes").
//!
//! Scheme 1 trains and tests on complete telemetry. Scheme 2 takes the
//! scheme-1 model (trained on complete data) and tests it on the
//! missing-data variant's test rows, measuring robustness to meter
//! dropouts the model never saw. Scheme 3 trains and tests on the
//! missing-data variant. Clean and missing variants of one seed share
//! frames, labels, attacks and meter errors, so the train/test frame
//! split is identical across schemes and no test frame ever leaks into
//! training.
//!
//! Datasets are materialized once up front; the (setting, algorithm)
//! work items then run on a worker pool, each training at most one model
//! per variant and scoring it under every requested scheme. A failed fit
//! marks only the cells that needed it; the rest of the matrix completes.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use pvs_core::attack::SettingId;
use pvs_core::grid::{NetworkModel, PvPlacement};
use pvs_core::ids::{
    evaluate_scores, stratified_split, train, Algorithm, Evaluation, Hyperparams, LabeledData,
    SplitIndices, TrainedModel,
};
use pvs_core::telemetry::{build_dataset, derive_missing_variant, Dataset, DatasetConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Train complete, test complete.
    CleanClean,
    /// Train complete, test with meter dropouts.
    CleanMissing,
    /// Train and test with meter dropouts.
    MissingMissing,
}

pub const ALL_SCHEMES: [Scheme; 3] = [
    Scheme::CleanClean,
    Scheme::CleanMissing,
    Scheme::MissingMissing,
];

impl Scheme {
    pub fn number(self) -> u8 {
        match self {
            Scheme::CleanClean => 1,
            Scheme::CleanMissing => 2,
            Scheme::MissingMissing => 3,
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Scheme::CleanClean => "train complete, test complete",
            Scheme::CleanMissing => "train complete, test missing-data",
            Scheme::MissingMissing => "train missing-data, test missing-data",
        }
    }

    /// Whether the train (resp. test) half uses the missing-data variant.
    pub fn train_on_missing(self) -> bool {
        matches!(self, Scheme::MissingMissing)
    }

    pub fn test_on_missing(self) -> bool {
        !matches!(self, Scheme::CleanClean)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

impl FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "1" => Ok(Scheme::CleanClean),
            "2" => Ok(Scheme::CleanMissing),
            "3" => Ok(Scheme::MissingMissing),
            other => Err(format!("unknown scheme '{other}' (expected 1, 2 or 3)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MatrixConfig {
    pub settings: Vec<SettingId>,
    pub algorithms: Vec<Algorithm>,
    pub schemes: Vec<Scheme>,
    pub days: u32,
    pub seed: u64,
    pub test_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub setting: SettingId,
    pub algorithm: Algorithm,
    pub scheme: u8,
    pub n_train: usize,
    pub n_test: usize,
    pub eval: Evaluation,
    /// Zero when the cell reuses a model trained for another scheme.
    pub train_seconds: f64,
    pub eval_seconds: f64,
}

/// A cell that could not be computed; the rest of the matrix is intact.
#[derive(Debug, Clone)]
pub struct CellFailure {
    pub setting: SettingId,
    pub algorithm: Algorithm,
    pub scheme: u8,
    pub error: String,
}

/// Generates each dataset variant at most once. The missing variant is
/// derived from the clean build (bit-identical to simulating it).
pub struct DatasetStore<'a> {
    model: &'a NetworkModel,
    placements: &'a [PvPlacement],
    pub seed: u64,
    pub days: u32,
    cache: HashMap<(SettingId, bool), Arc<Dataset>>,
}

impl<'a> DatasetStore<'a> {
    pub fn new(
        model: &'a NetworkModel,
        placements: &'a [PvPlacement],
        seed: u64,
        days: u32,
    ) -> Self {
        DatasetStore {
            model,
            placements,
            seed,
            days,
            cache: HashMap::new(),
        }
    }

    pub fn get(&mut self, setting: SettingId, missing: bool) -> Result<Arc<Dataset>> {
        if let Some(ds) = self.cache.get(&(setting, missing)) {
            return Ok(ds.clone());
        }
        let clean = match self.cache.get(&(setting, false)) {
            Some(ds) => ds.clone(),
            None => {
                let cfg = DatasetConfig::new(setting, self.seed, self.days);
                log::info!("generating {setting} dataset ({} days)", self.days);
                let t = Instant::now();
                let ds = Arc::new(
                    build_dataset(self.model, self.placements, &cfg)
                        .with_context(|| format!("generating {setting} dataset"))?,
                );
                log::info!(
                    "{setting}: {} frames, {} attacked, {} dropped ({:.1} s)",
                    ds.frames.len(),
                    ds.summary().attacked,
                    ds.dropped,
                    t.elapsed().as_secs_f64()
                );
                self.cache.insert((setting, false), ds.clone());
                ds
            }
        };
        if !missing {
            return Ok(clean);
        }
        let miss = Arc::new(derive_missing_variant(self.model, &clean)?);
        audit_variant_alignment(&clean, &miss)?;
        self.cache.insert((setting, true), miss.clone());
        Ok(miss)
    }

    /// Which (setting, missing) variants exist so far; lets tests assert
    /// that a clean-only run never touched the missing-data variants.
    pub fn built_variants(&self) -> Vec<(SettingId, bool)> {
        let mut keys: Vec<_> = self.cache.keys().copied().collect();
        keys.sort_by_key(|&(s, m)| (s as u8, m));
        keys
    }
}

/// The two variants must describe the same frames in the same order;
/// everything downstream (shared splits, scheme 2) relies on it.
fn audit_variant_alignment(clean: &Dataset, miss: &Dataset) -> Result<()> {
    ensure!(clean.frames.len() == miss.frames.len(), "variant length skew");
    for (c, m) in clean.frames.iter().zip(&miss.frames) {
        ensure!(
            c.frame == m.frame && c.attacked == m.attacked,
            "variant misalignment at frame {}",
            c.frame
        );
    }
    Ok(())
}

fn audit_split(split: &SplitIndices, n: usize) -> Result<()> {
    let mut seen = vec![0u8; n];
    for &i in &split.train {
        seen[i] += 1;
    }
    for &i in &split.test {
        seen[i] += 1;
    }
    ensure!(
        split.train.len() + split.test.len() == n && seen.iter().all(|&c| c == 1),
        "train/test split is not a partition"
    );
    Ok(())
}

pub struct MatrixRun {
    pub cells: Vec<CellResult>,
    pub failures: Vec<CellFailure>,
    pub wall_seconds: f64,
}

/// One worker-pool item: a (setting, algorithm) pair with the dataset
/// variants its schemes read. Holds Arcs so items are self-contained.
struct Task {
    setting: SettingId,
    algorithm: Algorithm,
    schemes: Vec<Scheme>,
    clean: Option<Arc<Dataset>>,
    missing: Option<Arc<Dataset>>,
    seed: u64,
    test_fraction: f64,
}

impl Task {
    fn variant(&self, missing: bool) -> &Arc<Dataset> {
        let ds = if missing { &self.missing } else { &self.clean };
        ds.as_ref().expect("task built with every variant its schemes need")
    }
}

fn fit_variant(
    task: &Task,
    split: &SplitIndices,
    labels: &[bool],
    on_missing: bool,
) -> Result<(TrainedModel, f64)> {
    let ds = task.variant(on_missing);
    let data = LabeledData::from_features(&ds.features, labels)?;
    let hp = Hyperparams::default_for(task.algorithm);
    let t = Instant::now();
    let model = train(&data.subset(&split.train), &hp, task.seed)?;
    let secs = t.elapsed().as_secs_f64();
    log::info!(
        "{}/{}: trained on the {} variant in {secs:.1} s",
        task.setting,
        task.algorithm,
        if on_missing { "missing-data" } else { "complete" }
    );
    Ok((model, secs))
}

fn failure(task: &Task, scheme: Scheme, error: String) -> CellFailure {
    CellFailure {
        setting: task.setting,
        algorithm: task.algorithm,
        scheme: scheme.number(),
        error,
    }
}

fn run_task(task: &Task) -> (Vec<CellResult>, Vec<CellFailure>) {
    let mut cells = Vec::new();
    let mut failures = Vec::new();

    let labels = task.variant(task.schemes[0].train_on_missing()).labels();
    let split = stratified_split(&labels, task.test_fraction, task.seed);
    if let Err(e) = audit_split(&split, labels.len()) {
        for &scheme in &task.schemes {
            failures.push(failure(task, scheme, format!("{e:#}")));
        }
        return (cells, failures);
    }

    // One model per trained-on variant, shared across the schemes that
    // reuse it; the fit's wall time is charged to the first scheme that
    // needed it and later reuses report zero.
    let mut fitted: HashMap<bool, Result<(TrainedModel, f64), String>> = HashMap::new();
    for &scheme in &task.schemes {
        let on_missing = scheme.train_on_missing();
        fitted
            .entry(on_missing)
            .or_insert_with(|| {
                fit_variant(task, &split, &labels, on_missing).map_err(|e| format!("{e:#}"))
            });
        let (model, pending_secs) = match fitted.get_mut(&on_missing).unwrap() {
            Ok(entry) => (&entry.0, &mut entry.1),
            Err(msg) => {
                failures.push(failure(task, scheme, msg.clone()));
                continue;
            }
        };
        let train_seconds = std::mem::take(pending_secs);

        let test_ds = task.variant(scheme.test_on_missing());
        let test_labels = test_ds.labels();
        if test_labels != labels {
            failures.push(failure(task, scheme, "label skew between variants".into()));
            continue;
        }
        let outcome = LabeledData::from_features(&test_ds.features, &test_labels)
            .map_err(anyhow::Error::from)
            .and_then(|data| {
                let test_data = data.subset(&split.test);
                let t = Instant::now();
                let scores = model.predict_scores(&test_data.x)?;
                Ok((evaluate_scores(&scores, &test_data.y), t.elapsed().as_secs_f64(), test_data.len()))
            });
        match outcome {
            Ok((eval, eval_seconds, n_test)) => {
                log::info!(
                    "{}/{}/scheme {scheme}: accuracy {:.4}",
                    task.setting,
                    task.algorithm,
                    eval.accuracy
                );
                cells.push(CellResult {
                    setting: task.setting,
                    algorithm: task.algorithm,
                    scheme: scheme.number(),
                    n_train: split.train.len(),
                    n_test,
                    eval,
                    train_seconds,
                    eval_seconds,
                });
            }
            Err(e) => failures.push(failure(task, scheme, format!("{e:#}"))),
        }
    }
    (cells, failures)
}

pub fn run_matrix(
    model: &NetworkModel,
    placements: &[PvPlacement],
    cfg: &MatrixConfig,
) -> Result<MatrixRun> {
    let mut store = DatasetStore::new(model, placements, cfg.seed, cfg.days);
    run_matrix_in(&mut store, cfg)
}

/// Like [`run_matrix`], but against a caller-owned dataset store, so the
/// generated datasets outlive the run.
pub fn run_matrix_in(store: &mut DatasetStore, cfg: &MatrixConfig) -> Result<MatrixRun> {
    if cfg.settings.is_empty() || cfg.algorithms.is_empty() || cfg.schemes.is_empty() {
        bail!("matrix needs at least one setting, algorithm and scheme");
    }
    ensure!(
        store.seed == cfg.seed && store.days == cfg.days,
        "dataset store was built for a different seed or horizon"
    );
    let started = Instant::now();

    let needs_clean = cfg.schemes.iter().any(|s| !s.train_on_missing() || !s.test_on_missing());
    let needs_missing = cfg.schemes.iter().any(|s| s.train_on_missing() || s.test_on_missing());
    let mut tasks = Vec::new();
    for &setting in &cfg.settings {
        let clean = needs_clean.then(|| store.get(setting, false)).transpose()?;
        let missing = needs_missing.then(|| store.get(setting, true)).transpose()?;
        for &algorithm in &cfg.algorithms {
            tasks.push(Task {
                setting,
                algorithm,
                schemes: cfg.schemes.clone(),
                clean: clean.clone(),
                missing: missing.clone(),
                seed: cfg.seed,
                test_fraction: cfg.test_fraction,
            });
        }
    }

    let outcomes: Vec<_> = tasks.par_iter().map(run_task).collect();
    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for (c, f) in outcomes {
        cells.extend(c);
        failures.extend(f);
    }
    Ok(MatrixRun {
        cells,
        failures,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schemes_parse_and_describe() {
        for s in ALL_SCHEMES {
            assert_eq!(s.to_string().parse::<Scheme>().unwrap(), s);
        }
        assert!(Scheme::CleanMissing.test_on_missing());
        assert!(!Scheme::CleanMissing.train_on_missing());
        assert!("4".parse::<Scheme>().is_err());
    }

    #[test]
    fn tiny_matrix_runs_and_reuses_models() {
        let (model, placements) = NetworkModel::default_case();
        let cfg = MatrixConfig {
            settings: vec![SettingId::S1],
            algorithms: vec![Algorithm::Lr],
            schemes: ALL_SCHEMES.to_vec(),
            days: 1,
            seed: 3,
            test_fraction: 0.25,
        };
        let run = run_matrix(&model, &placements, &cfg).unwrap();
        assert_eq!(run.cells.len(), 3);
        assert!(run.failures.is_empty());
        let s1 = &run.cells[0];
        let s2 = &run.cells[1];
        assert!(s1.train_seconds > 0.0);
        // Scheme 2 reuses the scheme 1 model.
        assert_eq!(s2.train_seconds, 0.0);
        assert_eq!(s1.n_train + s1.n_test, 720);
        // Same split everywhere.
        assert_eq!(s1.n_test, s2.n_test);
        assert_eq!(s1.n_test, run.cells[2].n_test);
    }

    #[test]
    fn clean_only_run_never_builds_missing_variants() {
        let (model, placements) = NetworkModel::default_case();
        let mut store = DatasetStore::new(&model, &placements, 3, 1);
        let cfg = MatrixConfig {
            settings: vec![SettingId::S1],
            algorithms: vec![Algorithm::Lr],
            schemes: vec![Scheme::CleanClean],
            days: 1,
            seed: 3,
            test_fraction: 0.25,
        };
        run_matrix_in(&mut store, &cfg).unwrap();
        let variants = store.built_variants();
        assert_eq!(variants, vec![(SettingId::S1, false)]);
    }
}
