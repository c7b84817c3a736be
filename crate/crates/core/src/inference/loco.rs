use ndarray::Array2;
use rayon::prelude::*;

use crate::data::{drop_column, Dataset};
use crate::error::{invalid, Result};
use crate::inference::loss::{per_sample_loss, LossMatrix};
use crate::inference::permutation::stitch;
use crate::inference::report::{ImportanceReport, Method, VariableImportance};
use crate::inference::wald::{summarize_losses, WaldMode};
use crate::learners::Crossfit;
use crate::rng::Stream;

/// Per-sample loss increase from refitting without variable `j` (`n × 1`).
/// Each fold's refit reuses that fold's resolved learner settings.
/// Forests keep the full model's per-split feature count.
pub fn loco_variable(data: &Dataset, cf: &Crossfit, j: usize, stream: Stream) -> Result<LossMatrix> {
    let Some(specs) = cf.specs.as_ref() else {
        return invalid("leave-one-covariate-out needs the learner settings of each fold");
    };
    if data.p() < 2 {
        return invalid("leave-one-covariate-out needs at least two covariates");
    }
    stitch(data, cf, j, 1, |k, eval| {
        let train = data.subset(&cf.fold_rows(k)).without_column(j);
        let reduced = specs[k].without_one_feature(data.p()).fit(&train, stream.tagged("loco").child(j as u64).child(k as u64))?;
        let full = cf.models[k].predict(eval.x())?;
        let without = reduced.predict(drop_column(eval.x(), j).view())?;
        let values = Array2::from_shape_fn((eval.n(), 1), |(i, _)| per_sample_loss(eval.y[i], full[i], without[i], eval.task));
        LossMatrix::new(j, values)
    })
}

pub fn loco_importance(data: &Dataset, cf: &Crossfit, wald: WaldMode, stream: Stream) -> Result<ImportanceReport> {
    let variables = (0..data.p())
        .into_par_iter()
        .map(|j| {
            let m = loco_variable(data, cf, j, stream)?;
            Ok(VariableImportance::from_summary(j, &summarize_losses(m.values.view(), wald)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImportanceReport::new(Method::Loco, variables))
}
