//! `pvs`: simulate a PV-rich distribution feeder, synthesize labeled
//! telemetry datasets with hidden inverter attacks, and train/evaluate
//! intrusion detectors on them.
//!
//! Exit codes: 0 success; 1 validation error (bad flags, config file, or
//! a failed network check); 2 runtime or convergence failure; 3 matrix
//! finished with some cells failed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pvs_cli::baseline::{
    evaluate_threshold, feature_baselines, fit_threshold, render_baselines, Objective,
};
use pvs_cli::config::{
    resolve_days, resolve_list, resolve_seed, resolve_test_fraction, FileConfig,
};
use pvs_cli::experiment::{run_matrix, MatrixConfig, Scheme, ALL_SCHEMES};
use pvs_cli::report::{accuracy_tables, write_results_csv};
use pvs_core::attack::{SettingId, ALL_SETTINGS};
use pvs_core::grid::{summarize, NetworkModel};
use pvs_core::ids::{
    evaluate_scores, load_model, save_model, stratified_split, train, Algorithm, Evaluation,
    Hyperparams, LabeledData, ALL_ALGORITHMS,
};
use pvs_core::powerflow::{solve, InjectionSet, SolverConfig};
use pvs_core::telemetry::{
    apparent_loss, build_dataset, read_features, read_snapshots, write_dataset, DatasetConfig,
};

#[derive(Parser)]
#[command(
    name = "pvs",
    about = "Feeder simulation, attack datasets, and intrusion detection",
    version
)]
struct Cli {
    /// key=value config file supplying defaults (seed, days, ...).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled dataset directory.
    Gen(GenArgs),
    /// Train one detector on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a saved model on a dataset directory.
    Eval(EvalArgs),
    /// Run the full setting x algorithm x scheme experiment.
    Matrix(MatrixArgs),
    /// Apparent-loss scatter plus threshold baselines on a dataset.
    Baseline(BaselineArgs),
    /// Check the built-in feeder against its published solution.
    ValidateNet,
}

#[derive(Args)]
struct GenArgs {
    /// Control setting: s1, s2, s3 or s4.
    #[arg(long)]
    setting: SettingId,
    #[arg(long)]
    days: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also mask load meters in 20% of frames.
    #[arg(long)]
    missing: bool,
    /// Output directory (created if absent).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset directory produced by `gen`.
    #[arg(long)]
    data: PathBuf,
    /// lr, knn, rf, gbt or mlp.
    #[arg(long)]
    algo: Algorithm,
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the model JSON.
    #[arg(long)]
    out: PathBuf,
    /// Held-out fraction for the post-train report; 0 trains on everything.
    #[arg(long)]
    test_fraction: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Optional CSV of per-frame scores.
    #[arg(long)]
    scores_out: Option<PathBuf>,
}

#[derive(Args)]
struct MatrixArgs {
    /// Comma-separated settings (default all four).
    #[arg(long)]
    settings: Option<String>,
    /// Comma-separated algorithms (default all five).
    #[arg(long)]
    algos: Option<String>,
    /// Comma-separated schemes (default 1,2,3).
    #[arg(long)]
    schemes: Option<String>,
    #[arg(long)]
    days: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Where to write results.csv (defaults to ./results.csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Optimize balanced accuracy instead of accuracy when fitting cuts.
    #[arg(long)]
    balanced: bool,
    /// Optional CSV of per-frame (apparent loss, label) pairs for plotting.
    #[arg(long)]
    scatter_out: Option<PathBuf>,
}

/// Failures split by exit code: 1 for rejected input, 2 for everything
/// that broke while doing the work.
enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

macro_rules! runtime_failure {
    ($($t:ty),* $(,)?) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure::Runtime(e.into())
            }
        }
    )*};
}
runtime_failure!(
    pvs_core::telemetry::TelemetryError,
    pvs_core::ids::IdsError,
    pvs_core::powerflow::PowerFlowError,
    csv::Error,
    std::io::Error,
);

trait OrInvalid<T> {
    /// Tag this error as a validation failure (exit code 1).
    fn or_invalid(self) -> Result<T, Failure>;
}

impl<T> OrInvalid<T> for Result<T> {
    fn or_invalid(self) -> Result<T, Failure> {
        self.map_err(Failure::Validation)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .format_target(false)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let ok = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    let file_cfg = match &cli.config {
        Some(path) => match FileConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::from(1);
            }
        },
        None => FileConfig::default(),
    };
    let outcome = match cli.command {
        Command::Gen(a) => cmd_gen(a, &file_cfg),
        Command::Train(a) => cmd_train(a, &file_cfg),
        Command::Eval(a) => cmd_eval(a),
        Command::Matrix(a) => cmd_matrix(a, &file_cfg),
        Command::Baseline(a) => cmd_baseline(a, &file_cfg),
        Command::ValidateNet => cmd_validate_net(),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn cmd_gen(args: GenArgs, file_cfg: &FileConfig) -> Result<ExitCode, Failure> {
    let seed = resolve_seed(args.seed, file_cfg).or_invalid()?;
    let days = resolve_days(args.days, file_cfg).or_invalid()?;
    let (model, placements) = NetworkModel::default_case();
    let mut cfg = DatasetConfig::new(args.setting, seed, days);
    if args.missing {
        cfg = cfg.with_missing();
    }
    let ds = build_dataset(&model, &placements, &cfg)?;
    write_dataset(&ds, &model, &placements, &args.out)?;
    let s = ds.summary();
    println!(
        "{}: {} frames ({} attacked, {} with masked meters, {} dropped) -> {}",
        args.setting,
        s.frames,
        s.attacked,
        s.missing_frames,
        s.dropped,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn load_labeled(dir: &Path) -> Result<LabeledData> {
    let table = read_features(&dir.join("features.csv"))?;
    Ok(LabeledData::from_table(&table)?)
}

fn print_eval(eval: &Evaluation) {
    println!(
        "accuracy {:.4}  precision {}  recall {:.4}  f1 {:.4}  jaccard {:.4}  roc-auc {:.4}  pr-auc {:.4}",
        eval.accuracy,
        eval.precision
            .map(|p| format!("{p:.4}"))
            .unwrap_or_else(|| "n/a".into()),
        eval.recall,
        eval.f1,
        eval.jaccard,
        eval.roc_auc,
        eval.pr_auc,
    );
    println!(
        "confusion: tp {} fp {} tn {} fn {}",
        eval.tp, eval.fp, eval.tn, eval.fn_
    );
}

fn cmd_train(args: TrainArgs, file_cfg: &FileConfig) -> Result<ExitCode, Failure> {
    let seed = resolve_seed(args.seed, file_cfg).or_invalid()?;
    let test_fraction = resolve_test_fraction(args.test_fraction, file_cfg).or_invalid()?;
    let data = load_labeled(&args.data)?;
    let hp = Hyperparams::default_for(args.algo);
    if test_fraction == 0.0 {
        let model = train(&data, &hp, seed)?;
        save_model(&model, &args.out)?;
        println!("trained {} on all {} rows -> {}", args.algo, data.len(), args.out.display());
        return Ok(ExitCode::SUCCESS);
    }
    let split = stratified_split(&data.y, test_fraction, seed);
    let model = train(&data.subset(&split.train), &hp, seed)?;
    save_model(&model, &args.out)?;
    let test = data.subset(&split.test);
    let scores = model.predict_scores(&test.x)?;
    println!(
        "trained {} on {} rows, held out {} -> {}",
        args.algo,
        split.train.len(),
        split.test.len(),
        args.out.display()
    );
    print_eval(&evaluate_scores(&scores, &test.y));
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode, Failure> {
    let model = load_model(&args.model)?;
    let table = read_features(&args.data.join("features.csv"))?;
    let data = LabeledData::from_table(&table)?;
    let scores = model.predict_scores(&data.x)?;
    if let Some(path) = &args.scores_out {
        let mut w = csv::Writer::from_path(path)
            .with_context(|| format!("cannot write {}", path.display()))?;
        w.write_record(["frame", "label", "score"])?;
        for (i, score) in scores.iter().enumerate() {
            w.write_record([
                table.frames[i].to_string(),
                (data.y[i] as u8).to_string(),
                format!("{score:.6}"),
            ])?;
        }
        w.flush()?;
    }
    println!(
        "{} ({}) on {} rows of {}",
        args.model.display(),
        model.algorithm,
        data.len(),
        args.data.display()
    );
    print_eval(&evaluate_scores(&scores, &data.y));
    Ok(ExitCode::SUCCESS)
}

fn parse_schemes(raw: Option<&str>) -> Result<Vec<Scheme>> {
    match raw {
        None => Ok(ALL_SCHEMES.to_vec()),
        Some(raw) => {
            let mut out = Vec::new();
            for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                out.push(part.parse::<Scheme>().map_err(anyhow::Error::msg)?);
            }
            if out.is_empty() {
                bail!("scheme list is empty");
            }
            Ok(out)
        }
    }
}

fn cmd_matrix(args: MatrixArgs, file_cfg: &FileConfig) -> Result<ExitCode, Failure> {
    let cfg = MatrixConfig {
        settings: resolve_list(args.settings.as_deref(), file_cfg, "settings", &ALL_SETTINGS)
            .or_invalid()?,
        algorithms: resolve_list(args.algos.as_deref(), file_cfg, "algorithms", &ALL_ALGORITHMS)
            .or_invalid()?,
        schemes: parse_schemes(args.schemes.as_deref()).or_invalid()?,
        days: resolve_days(args.days, file_cfg).or_invalid()?,
        seed: resolve_seed(args.seed, file_cfg).or_invalid()?,
        test_fraction: resolve_test_fraction(args.test_fraction, file_cfg).or_invalid()?,
    };
    let (model, placements) = NetworkModel::default_case();
    let run = run_matrix(&model, &placements, &cfg)?;
    let out = args.out.unwrap_or_else(|| PathBuf::from("results.csv"));
    write_results_csv(&out, &run.cells)?;
    print!("{}", accuracy_tables(&run.cells));
    println!(
        "{} cells in {:.1} s -> {}",
        run.cells.len(),
        run.wall_seconds,
        out.display()
    );
    if !run.failures.is_empty() {
        for f in &run.failures {
            eprintln!(
                "cell {}/{}/scheme {} failed: {}",
                f.setting, f.algorithm, f.scheme, f.error
            );
        }
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_baseline(args: BaselineArgs, file_cfg: &FileConfig) -> Result<ExitCode, Failure> {
    let seed = resolve_seed(args.seed, file_cfg).or_invalid()?;
    let test_fraction = resolve_test_fraction(args.test_fraction, file_cfg).or_invalid()?;
    let frames = read_snapshots(&args.data.join("snapshots.csv"))?;
    let labels: Vec<bool> = frames.iter().map(|f| f.attacked).collect();
    let losses: Vec<f64> = frames.iter().map(apparent_loss).collect();
    if let Some(path) = &args.scatter_out {
        let mut w = csv::Writer::from_path(path)
            .with_context(|| format!("creating {}", path.display()))?;
        w.write_record(["frame", "apparent_loss_kw", "label"])?;
        for (f, l) in frames.iter().zip(&losses) {
            w.write_record(&[
                f.frame.to_string(),
                l.to_string(),
                u8::from(f.attacked).to_string(),
            ])?;
        }
        w.flush()?;
        println!("scatter: {} rows -> {}", frames.len(), path.display());
    }

    let objective = if args.balanced {
        Objective::BalancedAccuracy
    } else {
        Objective::Accuracy
    };
    let split = stratified_split(&labels, test_fraction.max(0.01), seed);
    let gather = |idx: &[usize]| -> (Vec<f64>, Vec<bool>) {
        (
            idx.iter().map(|&i| losses[i]).collect(),
            idx.iter().map(|&i| labels[i]).collect(),
        )
    };
    let (train_v, train_y) = gather(&split.train);
    let (test_v, test_y) = gather(&split.test);
    let (rule, train_score) = fit_threshold(&train_v, &train_y, objective)?;
    println!(
        "apparent-loss cut: attack when loss {} {:.4} kW (train score {:.4})",
        if rule.positive_above { ">" } else { "<" },
        rule.threshold,
        train_score
    );
    println!(
        "apparent-loss test accuracy {:.4}, balanced {:.4}",
        evaluate_threshold(&rule, &test_v, &test_y, Objective::Accuracy),
        evaluate_threshold(&rule, &test_v, &test_y, Objective::BalancedAccuracy),
    );

    let data = load_labeled(&args.data)?;
    let report = feature_baselines(
        &data.subset(&split.train),
        &data.subset(&split.test),
        objective,
    )?;
    print!("{}", render_baselines(&report));
    Ok(ExitCode::SUCCESS)
}

/// Published solution for this feeder at nominal loading: total active
/// loss near 224.96 kW with the voltage floor of 0.9092 pu at bus 65.
fn cmd_validate_net() -> Result<ExitCode, Failure> {
    let (model, placements) = NetworkModel::default_case();
    let mut inj = InjectionSet::for_model(&model);
    for nl in NetworkModel::default_nominal_loads() {
        inj.add_load(&model, nl.bus, nl.p_kw, nl.q_kvar);
    }
    let sol = solve(&model, &inj, &SolverConfig::default())?;
    let (vmin_idx, vmin) = sol
        .v_mag
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty network");
    let vmin_bus = model.buses[vmin_idx].id;
    println!("{}", summarize(&model, &placements));
    println!(
        "nominal loading: loss {:.4} kW, min |V| {:.5} pu at bus {}",
        sol.loss_p_kw, vmin, vmin_bus
    );
    let loss_ok = (sol.loss_p_kw - 224.96).abs() / 224.96 < 0.005;
    let vmin_ok = (vmin - 0.90919).abs() < 1e-3 && vmin_bus == 65;
    if loss_ok && vmin_ok {
        println!("matches the published solution");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("MISMATCH against the published solution (expected loss 224.96 kW, vmin 0.90919 pu at bus 65)");
        Ok(ExitCode::from(1))
    }
}
