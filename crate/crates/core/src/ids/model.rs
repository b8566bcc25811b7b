//! Uniform interface over the five classifiers: algorithm names,
//! default hyperparameters, train/score dispatch, and JSON persistence.
//! A trained model carries its own standardizer, so callers always feed
//! raw feature matrices.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::ids::data::{LabeledData, Standardizer};
use crate::ids::forest::{self, ForestModel, ForestParams};
use crate::ids::gbt::{self, GbtModel, GbtParams};
use crate::ids::knn::{self, KnnModel, KnnParams};
use crate::ids::logistic::{self, LogisticModel, LogisticParams};
use crate::ids::mlp::{self, MlpModel, MlpParams};
use crate::ids::IdsError;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Lr,
    Knn,
    Rf,
    Gbt,
    Mlp,
}

pub const ALL_ALGORITHMS: [Algorithm; 5] = [
    Algorithm::Lr,
    Algorithm::Knn,
    Algorithm::Rf,
    Algorithm::Gbt,
    Algorithm::Mlp,
];

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Lr => "lr",
            Algorithm::Knn => "knn",
            Algorithm::Rf => "rf",
            Algorithm::Gbt => "gbt",
            Algorithm::Mlp => "mlp",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lr" | "logistic" => Ok(Algorithm::Lr),
            "knn" => Ok(Algorithm::Knn),
            "rf" | "forest" => Ok(Algorithm::Rf),
            "gbt" | "boosting" => Ok(Algorithm::Gbt),
            "mlp" | "nn" => Ok(Algorithm::Mlp),
            other => Err(format!(
                "unknown algorithm '{other}' (expected lr, knn, rf, gbt or mlp)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum Hyperparams {
    Lr(LogisticParams),
    Knn(KnnParams),
    Rf(ForestParams),
    Gbt(GbtParams),
    Mlp(MlpParams),
}

impl Hyperparams {
    pub fn default_for(algorithm: Algorithm) -> Hyperparams {
        match algorithm {
            Algorithm::Lr => Hyperparams::Lr(LogisticParams::default()),
            Algorithm::Knn => Hyperparams::Knn(KnnParams::default()),
            Algorithm::Rf => Hyperparams::Rf(ForestParams::default()),
            Algorithm::Gbt => Hyperparams::Gbt(GbtParams::default()),
            Algorithm::Mlp => Hyperparams::Mlp(MlpParams::default()),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Hyperparams::Lr(_) => Algorithm::Lr,
            Hyperparams::Knn(_) => Algorithm::Knn,
            Hyperparams::Rf(_) => Algorithm::Rf,
            Hyperparams::Gbt(_) => Algorithm::Gbt,
            Hyperparams::Mlp(_) => Algorithm::Mlp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    Lr(LogisticModel),
    Knn(KnnModel),
    Rf(ForestModel),
    Gbt(GbtModel),
    Mlp(MlpModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub format_version: u32,
    pub algorithm: Algorithm,
    /// Train-set feature statistics; applied before every prediction.
    pub standardizer: Standardizer,
    pub train_seed: u64,
    pub model: ModelKind,
}

pub fn train(data: &LabeledData, hp: &Hyperparams, seed: u64) -> Result<TrainedModel, IdsError> {
    data.check_trainable()?;
    let standardizer = Standardizer::fit(&data.x);
    let xs = standardizer.transform(&data.x);
    let model = match hp {
        Hyperparams::Lr(p) => ModelKind::Lr(logistic::fit(&xs, &data.y, p)?),
        Hyperparams::Knn(p) => ModelKind::Knn(knn::fit(&xs, &data.y, p)?),
        Hyperparams::Rf(p) => ModelKind::Rf(forest::fit(&xs, &data.y, p, seed)?),
        Hyperparams::Gbt(p) => ModelKind::Gbt(gbt::fit(&xs, &data.y, p)?),
        Hyperparams::Mlp(p) => ModelKind::Mlp(mlp::fit(&xs, &data.y, p, seed)?),
    };
    Ok(TrainedModel {
        format_version: MODEL_FORMAT_VERSION,
        algorithm: hp.algorithm(),
        standardizer,
        train_seed: seed,
        model,
    })
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        self.standardizer.mean.len()
    }

    /// Attack scores in [0, 1], one per row of the raw feature matrix.
    pub fn predict_scores(&self, x: &Array2<f64>) -> Result<Vec<f64>, IdsError> {
        if x.ncols() != self.n_features() {
            return Err(IdsError::FeatureArity {
                expected: self.n_features(),
                found: x.ncols(),
            });
        }
        let xs = self.standardizer.transform(x);
        Ok(match &self.model {
            ModelKind::Lr(m) => logistic::predict_scores(m, &xs),
            ModelKind::Knn(m) => knn::predict_scores(m, &xs),
            ModelKind::Rf(m) => forest::predict_scores(m, &xs),
            ModelKind::Gbt(m) => gbt::predict_scores(m, &xs),
            ModelKind::Mlp(m) => mlp::predict_scores(m, &xs),
        })
    }
}

pub fn save_model(model: &TrainedModel, path: &Path) -> Result<(), IdsError> {
    let file = File::create(path).map_err(|source| IdsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::to_writer(BufWriter::new(file), model).map_err(|source| IdsError::Json {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_model(path: &Path) -> Result<TrainedModel, IdsError> {
    let file = File::open(path).map_err(|source| IdsError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let model: TrainedModel =
        serde_json::from_reader(BufReader::new(file)).map_err(|source| IdsError::Json {
            path: path.display().to_string(),
            source,
        })?;
    if model.format_version != MODEL_FORMAT_VERSION {
        return Err(IdsError::FormatVersion {
            found: model.format_version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::rng::derive_rng;
    use rand::Rng;

    fn blobs(n_per: usize) -> LabeledData {
        let mut rng = derive_rng(30, 0, "model-test");
        let n = 2 * n_per;
        let mut x = Array2::<f64>::zeros((n, 3));
        let mut y = vec![false; n];
        for i in 0..n {
            let cls = i >= n_per;
            let center = if cls { 2.0 } else { -2.0 };
            for j in 0..3 {
                x[(i, j)] = center + rng.random_range(-1.0..1.0);
            }
            y[i] = cls;
        }
        LabeledData::new(x, y).unwrap()
    }

    #[test]
    fn every_algorithm_trains_and_separates() {
        let data = blobs(40);
        for algo in ALL_ALGORITHMS {
            let hp = match Hyperparams::default_for(algo) {
                // Shrink the heavy ones; the point is the plumbing.
                Hyperparams::Rf(p) => Hyperparams::Rf(ForestParams { n_trees: 15, ..p }),
                Hyperparams::Gbt(p) => Hyperparams::Gbt(GbtParams {
                    n_estimators: 60,
                    learning_rate: 0.1,
                    ..p
                }),
                Hyperparams::Mlp(p) => Hyperparams::Mlp(MlpParams {
                    hidden: vec![8],
                    max_epochs: 120,
                    ..p
                }),
                other => other,
            };
            let m = train(&data, &hp, 5).unwrap();
            assert_eq!(m.algorithm, algo);
            let s = m.predict_scores(&data.x).unwrap();
            let correct = s
                .iter()
                .zip(&data.y)
                .filter(|(&s, &yi)| (s >= 0.5) == yi)
                .count();
            assert!(
                correct as f64 / data.len() as f64 >= 0.95,
                "{algo}: {correct}/{}",
                data.len()
            );
        }
    }

    #[test]
    fn save_load_round_trips_scores() {
        let data = blobs(25);
        let dir = tempfile::tempdir().unwrap();
        for algo in [Algorithm::Lr, Algorithm::Knn, Algorithm::Mlp] {
            let hp = match Hyperparams::default_for(algo) {
                Hyperparams::Mlp(p) => Hyperparams::Mlp(MlpParams {
                    hidden: vec![6],
                    max_epochs: 30,
                    ..p
                }),
                other => other,
            };
            let m = train(&data, &hp, 9).unwrap();
            let path = dir.path().join(format!("{algo}.json"));
            save_model(&m, &path).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(m, back);
            assert_eq!(
                m.predict_scores(&data.x).unwrap(),
                back.predict_scores(&data.x).unwrap()
            );
        }
    }

    #[test]
    fn version_mismatch_is_rejected() {
        let data = blobs(10);
        let m = train(&data, &Hyperparams::default_for(Algorithm::Lr), 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let mut text = serde_json::to_string(&m).unwrap();
        text = text.replace("\"format_version\":1", "\"format_version\":999");
        std::fs::write(&path, text).unwrap();
        match load_model(&path) {
            Err(IdsError::FormatVersion { found: 999, expected }) => {
                assert_eq!(expected, MODEL_FORMAT_VERSION);
            }
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn arity_mismatch_is_rejected() {
        let data = blobs(10);
        let m = train(&data, &Hyperparams::default_for(Algorithm::Lr), 1).unwrap();
        let wrong = Array2::<f64>::zeros((4, 5));
        assert!(matches!(
            m.predict_scores(&wrong),
            Err(IdsError::FeatureArity {
                expected: 3,
                found: 5
            })
        ));
    }

    #[test]
    fn algorithm_names_round_trip() {
        for algo in ALL_ALGORITHMS {
            assert_eq!(algo.to_string().parse::<Algorithm>().unwrap(), algo);
        }
        assert!("svm".parse::<Algorithm>().is_err());
    }

    #[test]
    fn training_on_one_class_fails() {
        let x = Array2::<f64>::zeros((4, 2));
        let data = LabeledData::new(x, vec![true; 4]).unwrap();
        assert!(matches!(
            train(&data, &Hyperparams::default_for(Algorithm::Lr), 0),
            Err(IdsError::OneClass(_))
        ));
    }
}
