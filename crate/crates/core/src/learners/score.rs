use ndarray::ArrayView1;

use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::learners::Learner;
use crate::metrics::roc_auc;
use crate::stats::sigmoid;

pub fn r_squared(y: ArrayView1<f64>, pred: ArrayView1<f64>) -> Result<f64> {
    let mean = y.mean().unwrap_or(0.0);
    let ss_tot: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedMetric("R² of a constant target".into()));
    }
    let ss_res: f64 = y.iter().zip(pred).map(|(v, p)| (v - p) * (v - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Test-set R² (regression) or ROC-AUC of predicted probabilities (binary).
pub fn prediction_score(model: &dyn Learner, test: &Dataset) -> Result<f64> {
    let pred = model.predict(test.x())?;
    match test.task {
        Task::Regression => r_squared(test.y(), pred.view()),
        Task::Binary => {
            let prob: Vec<f64> = pred.iter().map(|&z| sigmoid(z)).collect();
            let labels: Vec<bool> = test.y.iter().map(|&v| v == 1.0).collect();
            roc_auc(&prob, &labels)
        }
    }
}
