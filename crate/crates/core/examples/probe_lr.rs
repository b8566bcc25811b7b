//! Temporary probe: LR accuracy per setting and scheme under the
//! accelerated solver, plus weight scale and achieved objective.

use ndarray::{Array1, Array2};
use pvs_core::attack::{SettingId, ALL_SETTINGS};
use pvs_core::grid::NetworkModel;
use pvs_core::ids::{
    evaluate_scores, stratified_split, train, Hyperparams, LabeledData, Standardizer,
};
use pvs_core::telemetry::{build_dataset, derive_missing_variant, DatasetConfig};

fn logloss(x: &Array2<f64>, y: &[bool], w: &Array1<f64>, b: f64, lambda: f64) -> f64 {
    let z = x.dot(w) + b;
    let n = y.len() as f64;
    let smooth = z
        .iter()
        .zip(y)
        .map(|(&z, &y)| {
            let softplus = if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            };
            softplus - (y as u8 as f64) * z
        })
        .sum::<f64>()
        / n;
    smooth + lambda * w.iter().map(|v| v.abs()).sum::<f64>()
}

fn main() {
    let (model, placements) = NetworkModel::default_case();
    for setting in ALL_SETTINGS {
        let cfg = DatasetConfig::new(setting, 1, 30);
        let clean = build_dataset(&model, &placements, &cfg).unwrap();
        let missing = derive_missing_variant(&model, &clean).unwrap();
        let dc = LabeledData::from_features(&clean.features, &clean.labels()).unwrap();
        let dm = LabeledData::from_features(&missing.features, &missing.labels()).unwrap();
        let split = stratified_split(&dc.y, 0.2, 1);

        let hp = Hyperparams::Lr(Default::default());
        let tr_c = dc.subset(&split.train);
        let te_c = dc.subset(&split.test);
        let te_m = dm.subset(&split.test);
        let m1 = train(&tr_c, &hp, 1).unwrap();
        let a1 = evaluate_scores(&m1.predict_scores(&te_c.x).unwrap(), &te_c.y).accuracy;
        let a2 = evaluate_scores(&m1.predict_scores(&te_m.x).unwrap(), &te_m.y).accuracy;
        let tr_m = dm.subset(&split.train);
        let m3 = train(&tr_m, &hp, 1).unwrap();
        let a3 = evaluate_scores(&m3.predict_scores(&te_m.x).unwrap(), &te_m.y).accuracy;

        if let pvs_core::ids::model::ModelKind::Lr(lm) = &m1.model {
            let st = Standardizer::fit(&tr_c.x);
            let xs = st.transform(&tr_c.x);
            let lambda = 1.0 / (100.0 * xs.nrows() as f64);
            let w = Array1::from_vec(lm.weights.clone());
            println!(
                "{setting}: s1 {a1:.4}  s2 {a2:.4}  s3 {a3:.4}  | iters {} conv {} sum|w| {:.2} loss {:.6}",
                lm.iterations,
                lm.converged,
                lm.weights.iter().map(|v| v.abs()).sum::<f64>(),
                logloss(&xs, &tr_c.y, &w, lm.intercept, lambda)
            );
        }
    }
}
