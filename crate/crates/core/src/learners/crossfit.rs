use ndarray::{Array1, Axis};
use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::learners::{Learner, LearnerSpec};
use crate::rng::Stream;

/// Two-fold cross-fitting: `models[k]` is trained on fold `k` and evaluated
/// on the other fold.
#[derive(Debug)]
pub struct Crossfit {
    /// Fold of each sample (0 or 1).
    pub assignment: Vec<u8>,
    pub models: [Box<dyn Learner>; 2],
    /// Resolved (tuned) learner settings per fold, when known.
    pub specs: Option<[LearnerSpec; 2]>,
}

impl Crossfit {
    pub fn from_parts(assignment: Vec<u8>, models: [Box<dyn Learner>; 2]) -> Result<Self> {
        if assignment.iter().any(|&f| f > 1) {
            return invalid("fold labels must be 0 or 1");
        }
        if !assignment.contains(&0) || !assignment.contains(&1) {
            return invalid("both folds must be non-empty");
        }
        Ok(Crossfit { assignment, models, specs: None })
    }

    /// Rows of fold `k`, ascending.
    pub fn fold_rows(&self, k: usize) -> Vec<usize> {
        self.assignment.iter().enumerate().filter(|(_, &f)| f as usize == k).map(|(i, _)| i).collect()
    }

    /// Rows on which `models[k]` is evaluated: the complement of its
    /// training fold.
    pub fn test_rows(&self, k: usize) -> Vec<usize> {
        self.fold_rows(1 - k)
    }

    /// Model that did not see sample `i` during training.
    pub fn model_for_sample(&self, i: usize) -> &dyn Learner {
        self.models[1 - self.assignment[i] as usize].as_ref()
    }

    /// Out-of-fold predictions for every sample of `data`.
    pub fn predict_out_of_fold(&self, data: &Dataset) -> Result<Array1<f64>> {
        if data.n() != self.assignment.len() {
            return Err(Error::DimensionMismatch { expected: self.assignment.len(), got: data.n() });
        }
        let mut out = Array1::zeros(data.n());
        for k in 0..2 {
            let rows = self.test_rows(k);
            let pred = self.models[k].predict(data.x.select(Axis(0), &rows).view())?;
            for (&r, v) in rows.iter().zip(pred) {
                out[r] = v;
            }
        }
        Ok(out)
    }
}

/// Random 50/50 fold assignment.
pub fn split_folds(n: usize, stream: Stream) -> Vec<u8> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream.rng());
    let mut assignment = vec![0u8; n];
    for &i in &idx[n / 2..] {
        assignment[i] = 1;
    }
    assignment
}

/// Cross-fit with an arbitrary training routine.
pub fn make_crossfit_with<F>(data: &Dataset, stream: Stream, fit: F) -> Result<Crossfit>
where
    F: Fn(&Dataset, Stream) -> Result<Box<dyn Learner>>,
{
    if data.n() < 4 {
        return invalid("cross-fitting needs at least four samples");
    }
    let assignment = split_folds(data.n(), stream.tagged("folds"));
    let fit_fold = |k: usize| -> Result<Box<dyn Learner>> {
        let rows: Vec<usize> = (0..data.n()).filter(|&i| assignment[i] as usize == k).collect();
        fit(&data.subset(&rows), stream.tagged("fold").child(k as u64))
    };
    let models = [fit_fold(0)?, fit_fold(1)?];
    Crossfit::from_parts(assignment, models)
}

/// Cross-fit `learner`, tuning each fold's hyperparameters on that fold.
pub fn make_crossfit(data: &Dataset, learner: &LearnerSpec, stream: Stream) -> Result<Crossfit> {
    let specs = std::sync::Mutex::new([None, None]);
    let mut cf = make_crossfit_with(data, stream, |d, s| {
        let resolved = learner.resolve(d, s)?;
        let model = resolved.fit(d, s)?;
        let k = if specs.lock().unwrap()[0].is_none() { 0 } else { 1 };
        specs.lock().unwrap()[k] = Some(resolved);
        Ok(model)
    })?;
    let [a, b] = specs.into_inner().unwrap();
    cf.specs = Some([a.unwrap(), b.unwrap()]);
    Ok(cf)
}
