use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condsampler::{fit_conditional, fit_conditional_on, ConditionalSampler, SamplerConfig, SamplerFitSet, Shuffles};
use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::inference::loss::LossMatrix;
use crate::inference::report::{ImportanceReport, Method, VariableImportance};
use crate::inference::wald::{summarize_losses, WaldMode};
use crate::inference::DEFAULT_B;
use crate::learners::{Crossfit, Learner};
use crate::rng::Stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpiConfig {
    /// Perturbed copies per variable and sample.
    #[serde(default = "default_b")]
    pub b: usize,
    #[serde(default)]
    pub wald: WaldMode,
    #[serde(default)]
    pub sampler: SamplerConfig,
}

fn default_b() -> usize {
    DEFAULT_B
}

impl Default for CpiConfig {
    fn default() -> Self {
        CpiConfig { b: DEFAULT_B, wald: WaldMode::default(), sampler: SamplerConfig::default() }
    }
}

/// Losses of `model` on `eval` when column `sampler.j` is replaced by
/// conditional draws.
pub fn cpi_single(model: &dyn Learner, eval: &Dataset, sampler: &ConditionalSampler, b: usize, shuffles: &Shuffles) -> Result<LossMatrix> {
    if sampler.n() != eval.n() {
        return Err(Error::DimensionMismatch { expected: eval.n(), got: sampler.n() });
    }
    let columns = sampler.draw_columns(b, shuffles)?;
    LossMatrix::from_columns(model, eval.x(), eval.y(), sampler.j, columns.view())
}

/// Same as [`cpi_single`] with plain permutations of column `j`.
pub fn pi_single(model: &dyn Learner, eval: &Dataset, j: usize, b: usize, shuffles: &Shuffles) -> Result<LossMatrix> {
    if j >= eval.p() {
        return invalid(format!("variable {j} out of range for {} columns", eval.p()));
    }
    let n = eval.n();
    let xj = eval.x.column(j);
    let mut columns = Array2::zeros((n, b));
    for k in 0..b {
        let perm: Vec<usize> = match shuffles {
            Shuffles::Pinned(perms) => {
                let perm = perms.get(k).ok_or_else(|| Error::InvalidArgument(format!("no pinned permutation for draw {k}")))?;
                if perm.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: perm.len() });
                }
                perm.clone()
            }
            Shuffles::Random(s) => {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut s.child(k as u64).rng());
                perm
            }
        };
        for i in 0..n {
            columns[[i, k]] = xj[perm[i]];
        }
    }
    LossMatrix::from_columns(model, eval.x(), eval.y(), j, columns.view())
}

/// Conditional samplers for variable `j` on each cross-fitting test fold.
/// They depend on the fold split only, so learners that share the split can
/// share them.
pub fn fit_fold_samplers(data: &Dataset, cf: &Crossfit, j: usize, config: &SamplerConfig, stream: Stream) -> Result<[ConditionalSampler; 2]> {
    let fit_k = |k: usize| -> Result<ConditionalSampler> {
        let test = data.x.select(Axis(0), &cf.test_rows(k));
        let s = stream.tagged("sampler").child(j as u64).child(k as u64);
        match config.fit_set {
            SamplerFitSet::Evaluation => fit_conditional(test.view(), j, config, s),
            SamplerFitSet::Training => {
                let train = data.x.select(Axis(0), &cf.fold_rows(k));
                fit_conditional_on(train.view(), test.view(), j, config, s)
            }
        }
    };
    Ok([fit_k(0)?, fit_k(1)?])
}

/// Cross-fitted losses in original row order, given fitted fold samplers.
pub fn cpi_with_samplers(
    data: &Dataset,
    cf: &Crossfit,
    samplers: &[ConditionalSampler; 2],
    b: usize,
    stream: Stream,
) -> Result<LossMatrix> {
    let j = samplers[0].j;
    stitch(data, cf, j, b, |k, eval| {
        let shuffles = Shuffles::Random(stream.tagged("draws").child(j as u64).child(k as u64));
        cpi_single(cf.models[k].as_ref(), eval, &samplers[k], b, &shuffles)
    })
}

/// Cross-fitted conditional losses for variable `j` (`n × B`).
pub fn conditional_loss_matrix(data: &Dataset, cf: &Crossfit, j: usize, config: &CpiConfig, stream: Stream) -> Result<LossMatrix> {
    let samplers = fit_fold_samplers(data, cf, j, &config.sampler, stream)?;
    cpi_with_samplers(data, cf, &samplers, config.b, stream)
}

/// Cross-fitted marginal-permutation losses for variable `j` (`n × B`).
pub fn marginal_loss_matrix(data: &Dataset, cf: &Crossfit, j: usize, b: usize, stream: Stream) -> Result<LossMatrix> {
    stitch(data, cf, j, b, |k, eval| {
        let shuffles = Shuffles::Random(stream.tagged("pi-draws").child(j as u64).child(k as u64));
        pi_single(cf.models[k].as_ref(), eval, j, b, &shuffles)
    })
}

/// Runs `per_fold` on each test fold and writes its rows back in place.
pub(crate) fn stitch<F>(data: &Dataset, cf: &Crossfit, j: usize, b: usize, per_fold: F) -> Result<LossMatrix>
where
    F: Fn(usize, &Dataset) -> Result<LossMatrix>,
{
    if b == 0 {
        return invalid("B must be positive");
    }
    if data.n() != cf.assignment.len() {
        return Err(Error::DimensionMismatch { expected: cf.assignment.len(), got: data.n() });
    }
    let mut values = Array2::zeros((data.n(), b));
    for k in 0..2 {
        let rows = cf.test_rows(k);
        let part = per_fold(k, &data.subset(&rows))?;
        for (r, &i) in rows.iter().enumerate() {
            values.row_mut(i).assign(&part.values.row(r));
        }
    }
    LossMatrix::new(j, values)
}

fn report_from<F>(method: Method, p: usize, wald: WaldMode, losses: F) -> Result<ImportanceReport>
where
    F: Fn(usize) -> Result<LossMatrix> + Sync,
{
    let variables = (0..p)
        .into_par_iter()
        .map(|j| {
            let m = losses(j)?;
            Ok(VariableImportance::from_summary(j, &summarize_losses(m.values.view(), wald)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ImportanceReport::new(method, variables))
}

/// Conditional permutation importance of every variable.
pub fn cpi_importance(data: &Dataset, cf: &Crossfit, config: &CpiConfig, stream: Stream) -> Result<ImportanceReport> {
    report_from(Method::Cpi, data.p(), config.wald, |j| conditional_loss_matrix(data, cf, j, config, stream))
}

/// Marginal permutation importance of every variable.
pub fn pi_importance(data: &Dataset, cf: &Crossfit, b: usize, wald: WaldMode, stream: Stream) -> Result<ImportanceReport> {
    report_from(Method::Pi, data.p(), wald, |j| marginal_loss_matrix(data, cf, j, b, stream))
}
