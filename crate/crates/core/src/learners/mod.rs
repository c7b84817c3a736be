//! Base learners, hyperparameter tuning and the cross-fitting protocol.

mod crossfit;
mod forest;
mod linear;
mod mlp;
mod score;
mod tuning;

pub use crossfit::{make_crossfit, make_crossfit_with, split_folds, Crossfit};
pub use forest::{fit_random_forest, ForestConfig, MaxFeatures, Node, RandomForest, Tree, PROBA_CLAMP};
pub use linear::LinearModel;
pub use mlp::{fit_mlp, flatten, Dense, Mlp, MlpConfig, Optimizer, L1_GRID, L2_GRID, LEARNING_RATE_GRID};
pub use score::{prediction_score, r_squared};
pub use tuning::{inner_validation_loss, tune_forest_depth, tune_hyperparams, FitConfig};

pub use crate::data::{Dataset, Task};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::stats::bce_with_logit;

/// A fitted predictor.
///
/// Outputs are on the scale the importance losses expect: the fitted value
/// for regression and the logit for binary tasks.
pub trait Learner: Send + Sync + std::fmt::Debug {
    fn task(&self) -> Task;

    fn n_features(&self) -> usize;

    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>>;

    /// Predictions for `x` with column `j` replaced by each column of
    /// `columns` in turn; result is `n × columns.ncols()`.
    fn predict_with_columns(&self, x: ArrayView2<f64>, j: usize, columns: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (n, p) = x.dim();
        if j >= p {
            return Err(Error::InvalidArgument(format!("column {j} out of range for {p} features")));
        }
        if columns.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, got: columns.nrows() });
        }
        let mut out = Array2::zeros((n, columns.ncols()));
        let mut xb = x.to_owned();
        for (b, col) in columns.columns().into_iter().enumerate() {
            xb.column_mut(j).assign(&col);
            out.column_mut(b).assign(&self.predict(xb.view())?);
        }
        Ok(out)
    }
}

/// Mean data loss of predictions: MSE, or cross-entropy on logits.
pub fn data_loss(task: Task, pred: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    let m = y.len() as f64;
    match task {
        Task::Regression => pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / m,
        Task::Binary => pred.iter().zip(y).map(|(&p, &t)| bce_with_logit(t, p)).sum::<f64>() / m,
    }
}

/// Which learner to train, and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerSpec {
    Mlp {
        #[serde(default)]
        config: MlpConfig,
        /// Tune learning rate and penalties over [`MlpConfig::default_grid`].
        #[serde(default = "yes")]
        tune: bool,
    },
    Forest {
        #[serde(default)]
        config: ForestConfig,
    },
}

fn yes() -> bool {
    true
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec::Mlp { config: MlpConfig::default(), tune: true }
    }
}

impl LearnerSpec {
    pub fn forest() -> Self {
        LearnerSpec::Forest { config: ForestConfig::default() }
    }

    pub fn label(&self) -> &'static str {
        match self {
            LearnerSpec::Mlp { .. } => "mlp",
            LearnerSpec::Forest { .. } => "rf",
        }
    }

    /// Tuned configuration for `data` (or the fixed one when not tuning).
    pub fn resolve(&self, data: &Dataset, stream: Stream) -> Result<LearnerSpec> {
        match self {
            LearnerSpec::Mlp { config, tune: true } => {
                let (_, best) = tune_hyperparams(data, &config.default_grid(), stream.tagged("tune"))?;
                Ok(LearnerSpec::Mlp { config: best, tune: false })
            }
            other => Ok(other.clone()),
        }
    }

    /// Settings for refitting on the same data minus one column. A forest
    /// keeps the per-split feature count it had on all `full_p` columns, so
    /// dropping a column removes information without changing the search.
    pub fn without_one_feature(&self, full_p: usize) -> LearnerSpec {
        match self {
            LearnerSpec::Forest { config } => {
                let k = config.max_features.resolve(full_p).min(full_p.saturating_sub(1)).max(1);
                LearnerSpec::Forest { config: ForestConfig { max_features: MaxFeatures::Count(k), ..config.clone() } }
            }
            other => other.clone(),
        }
    }

    /// Fit on `data`, tuning first if requested.
    pub fn fit(&self, data: &Dataset, stream: Stream) -> Result<Box<dyn Learner>> {
        match self.resolve(data, stream)? {
            LearnerSpec::Mlp { config, .. } => Ok(Box::new(fit_mlp(data, &config, stream.tagged("fit"))?)),
            LearnerSpec::Forest { config } => Ok(Box::new(fit_random_forest(data, &config, stream.tagged("fit"))?)),
        }
    }
}

impl std::str::FromStr for LearnerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" | "dnn" => Ok(LearnerSpec::default()),
            "rf" | "forest" => Ok(LearnerSpec::forest()),
            other => Err(Error::UnknownTag(other.to_string())),
        }
    }
}
