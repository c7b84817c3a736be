use ndarray::{Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::learners::Learner;

/// Fixed affine predictor `x·w + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Array1<f64>,
    pub intercept: f64,
    pub task: Task,
}

impl LinearModel {
    pub fn new(weights: Array1<f64>, intercept: f64, task: Task) -> Self {
        LinearModel { weights, intercept, task }
    }

    /// Ignores its input entirely.
    pub fn constant(p: usize, value: f64, task: Task) -> Self {
        LinearModel { weights: Array1::zeros(p), intercept: value, task }
    }
}

impl Learner for LinearModel {
    fn task(&self) -> Task {
        self.task
    }

    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.weights.len() {
            return Err(Error::DimensionMismatch { expected: self.weights.len(), got: x.ncols() });
        }
        Ok(x.dot(&self.weights) + self.intercept)
    }

    fn predict_with_columns(&self, x: ArrayView2<f64>, j: usize, columns: ArrayView2<f64>) -> Result<Array2<f64>> {
        let base = self.predict(x)?;
        let wj = self.weights[j];
        Ok(Array2::from_shape_fn(columns.dim(), |(i, b)| base[i] + wj * (columns[[i, b]] - x[[i, j]])))
    }
}
