//! Intrusion detectors: five classifiers over the six aggregate features,
//! trained from labeled datasets, plus the shared evaluation machinery.
//!
//! Everything here is self-contained: models consume a [`data::LabeledData`]
//! matrix, standardize inputs with train-set statistics, and emit a score
//! in [0, 1] per frame ("probability of attack"); 0.5 is the decision
//! threshold throughout.

pub mod data;
pub mod forest;
pub mod gbt;
pub mod knn;
pub mod logistic;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod split;
pub mod tree;

use thiserror::Error;

pub use data::{LabeledData, Standardizer};
pub use metrics::{evaluate_scores, Evaluation};
pub use model::{
    load_model, save_model, train, Algorithm, Hyperparams, TrainedModel, ALL_ALGORITHMS,
    MODEL_FORMAT_VERSION,
};
pub use split::{kfold_indices, stratified_split, SplitIndices};

#[derive(Debug, Error)]
pub enum IdsError {
    #[error("dataset has {rows} rows but {labels} labels")]
    ShapeMismatch { rows: usize, labels: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("training set needs both classes, found only {0}")]
    OneClass(String),
    #[error("bad hyperparameter: {0}")]
    BadHyperparameter(String),
    #[error("model was saved with format {found}, expected {expected}")]
    FormatVersion { found: u32, expected: u32 },
    #[error("model expects {expected} features, data has {found}")]
    FeatureArity { expected: usize, found: usize },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error in {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}
