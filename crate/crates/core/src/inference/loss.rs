use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::learners::Learner;
use crate::stats::softplus;

/// Loss increase on one sample when the prediction moves from `yhat` to
/// `ytilde`. Binary inputs are logits.
///
/// Regression: `(y - ỹ)² - (y - ŷ)²`. Binary: the cross-entropy difference
/// `CE(ỹ) - CE(ŷ)`, which equals
/// `y ln(S(ŷ)/S(ỹ)) + (1-y) ln((1-S(ŷ))/(1-S(ỹ)))` and is evaluated through
/// softplus so saturated logits stay finite.
pub fn per_sample_loss(y: f64, yhat: f64, ytilde: f64, task: Task) -> f64 {
    match task {
        Task::Regression => (y - ytilde) * (y - ytilde) - (y - yhat) * (y - yhat),
        Task::Binary => (softplus(ytilde) - y * ytilde) - (softplus(yhat) - y * yhat),
    }
}

/// Per-sample, per-draw loss differences for one variable (`n × B`).
#[derive(Debug, Clone, PartialEq)]
pub struct LossMatrix {
    pub j: usize,
    pub values: Array2<f64>,
}

impl LossMatrix {
    pub fn new(j: usize, values: Array2<f64>) -> Result<Self> {
        if values.ncols() == 0 || values.nrows() == 0 {
            return Err(Error::InvalidArgument("loss matrix needs at least one sample and one draw".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite loss for variable {j}")));
        }
        Ok(LossMatrix { j, values })
    }

    /// Losses of `model` on `(x, y)` with column `j` replaced by each column
    /// of `columns`.
    pub fn from_columns(
        model: &dyn Learner,
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        j: usize,
        columns: ArrayView2<f64>,
    ) -> Result<Self> {
        let yhat = model.predict(x)?;
        let ytilde = model.predict_with_columns(x, j, columns)?;
        let task = model.task();
        let values = Array2::from_shape_fn(ytilde.dim(), |(i, b)| per_sample_loss(y[i], yhat[i], ytilde[[i, b]], task));
        LossMatrix::new(j, values)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn b(&self) -> usize {
        self.values.ncols()
    }
}
