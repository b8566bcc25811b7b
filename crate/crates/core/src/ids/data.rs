//! Feature matrices and train-set standardization.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::ids::IdsError;
use crate::telemetry::dataset::FeatureTable;
use crate::telemetry::frame::FeatureVector;

/// Row-major feature matrix with boolean labels (true = attacked).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub x: Array2<f64>,
    pub y: Vec<bool>,
}

impl LabeledData {
    pub fn new(x: Array2<f64>, y: Vec<bool>) -> Result<Self, IdsError> {
        if x.nrows() != y.len() {
            return Err(IdsError::ShapeMismatch {
                rows: x.nrows(),
                labels: y.len(),
            });
        }
        Ok(LabeledData { x, y })
    }

    pub fn from_features(features: &[FeatureVector], labels: &[bool]) -> Result<Self, IdsError> {
        let mut x = Array2::zeros((features.len(), 6));
        for (i, f) in features.iter().enumerate() {
            for (j, v) in f.as_array().into_iter().enumerate() {
                x[(i, j)] = v;
            }
        }
        Self::new(x, labels.to_vec())
    }

    pub fn from_table(t: &FeatureTable) -> Result<Self, IdsError> {
        Self::from_features(&t.features, &t.labels)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    /// Rows at `idx`, in order (repeats allowed, e.g. bootstrap samples).
    pub fn subset(&self, idx: &[usize]) -> LabeledData {
        let x = self.x.select(Axis(0), idx);
        let y = idx.iter().map(|&i| self.y[i]).collect();
        LabeledData { x, y }
    }

    pub fn n_positive(&self) -> usize {
        self.y.iter().filter(|&&b| b).count()
    }

    /// Errors unless both classes are present.
    pub fn check_trainable(&self) -> Result<(), IdsError> {
        if self.is_empty() {
            return Err(IdsError::EmptyTrainingSet);
        }
        match self.n_positive() {
            0 => Err(IdsError::OneClass("normal".into())),
            p if p == self.len() => Err(IdsError::OneClass("attacked".into())),
            _ => Ok(()),
        }
    }
}

/// Per-column z-score transform fitted on the training set. Constant
/// columns get unit scale so they pass through centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Array2<f64>) -> Standardizer {
        let n = x.nrows().max(1) as f64;
        let mean: Vec<f64> = x.sum_axis(Axis(0)).iter().map(|s| s / n).collect();
        let std: Vec<f64> = (0..x.ncols())
            .map(|j| {
                let var = x
                    .column(j)
                    .iter()
                    .map(|v| (v - mean[j]).powi(2))
                    .sum::<f64>()
                    / n;
                let s = var.sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| (v - self.mean[j]) / self.std[j]);
        }
        out
    }

    pub fn transform_row(&self, row: ArrayView1<f64>) -> Array1<f64> {
        Array1::from_iter(
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - self.mean[j]) / self.std[j]),
        )
    }
}
