use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{invalid, Result};
use crate::data::Task;
use crate::learners::PROBA_CLAMP;
use crate::learners::{data_loss, fit_mlp, fit_random_forest, ForestConfig, Learner, MlpConfig};
use crate::stats::logit;
use crate::rng::Stream;

/// A hyperparameter configuration that can train a model.
pub trait FitConfig {
    fn fit_boxed(&self, data: &Dataset, stream: Stream) -> Result<Box<dyn Learner>>;
}

impl FitConfig for MlpConfig {
    fn fit_boxed(&self, data: &Dataset, stream: Stream) -> Result<Box<dyn Learner>> {
        Ok(Box::new(fit_mlp(data, self, stream)?))
    }
}

impl FitConfig for ForestConfig {
    fn fit_boxed(&self, data: &Dataset, stream: Stream) -> Result<Box<dyn Learner>> {
        Ok(Box::new(fit_random_forest(data, self, stream)?))
    }
}

fn halves(n: usize, stream: Stream) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream.rng());
    let b = idx.split_off(n / 2);
    (idx, b)
}

/// Mean held-out loss of `config` over a random 2-fold split of `data`.
pub fn inner_validation_loss<C: FitConfig>(data: &Dataset, config: &C, stream: Stream) -> Result<f64> {
    let (a, b) = halves(data.n(), stream.tagged("split"));
    let (da, db) = (data.subset(&a), data.subset(&b));
    let mut total = 0.0;
    for (k, (train, valid)) in [(&da, &db), (&db, &da)].into_iter().enumerate() {
        let model = config.fit_boxed(train, stream.child(k as u64))?;
        let pred = model.predict(valid.x())?;
        total += data_loss(data.task, pred.view(), valid.y());
    }
    Ok(total / 2.0)
}

/// Grid entry with the lowest inner 2-fold validation loss; ties go to the
/// earliest entry. Every entry is scored on the same split.
pub fn tune_hyperparams<C: FitConfig + Clone>(data: &Dataset, grid: &[C], stream: Stream) -> Result<(usize, C)> {
    if grid.is_empty() {
        return invalid("hyperparameter grid is empty");
    }
    if grid.len() == 1 {
        return Ok((0, grid[0].clone()));
    }
    if data.n() < 4 {
        return invalid("need at least four rows for inner 2-fold validation");
    }
    let mut best = (0, f64::INFINITY);
    for (k, cfg) in grid.iter().enumerate() {
        let loss = inner_validation_loss(data, cfg, stream)?;
        if loss < best.1 {
            best = (k, loss);
        }
    }
    Ok((best.0, grid[best.0].clone()))
}

/// Index of the best depth in `depths`, chosen exactly as
/// [`tune_hyperparams`] would over `base.with_depth(d)` for each `d`, but
/// fitting one deep forest per inner half and cutting it at every depth.
pub fn tune_forest_depth(data: &Dataset, base: &ForestConfig, depths: &[Option<usize>], stream: Stream) -> Result<usize> {
    if depths.is_empty() {
        return invalid("depth grid is empty");
    }
    if depths.len() == 1 {
        return Ok(0);
    }
    if data.n() < 4 {
        return invalid("need at least four rows for inner 2-fold validation");
    }
    let deepest = if depths.contains(&None) { None } else { depths.iter().flatten().max().copied() };
    let cfg = base.clone().with_depth(deepest);
    let (a, b) = halves(data.n(), stream.tagged("split"));
    let (da, db) = (data.subset(&a), data.subset(&b));
    let mut totals = vec![0.0; depths.len()];
    for (k, (train, valid)) in [(&da, &db), (&db, &da)].into_iter().enumerate() {
        let forest = fit_random_forest(train, &cfg, stream.child(k as u64))?;
        for (t, &d) in totals.iter_mut().zip(depths) {
            let pred = forest.predict_raw_at_depth(valid.x(), d)?;
            let pred = match data.task {
                Task::Regression => pred,
                Task::Binary => pred.mapv(|p| logit(p.clamp(PROBA_CLAMP, 1.0 - PROBA_CLAMP))),
            };
            *t += data_loss(data.task, pred.view(), valid.y());
        }
    }
    let mut best = (0, f64::INFINITY);
    for (k, &t) in totals.iter().enumerate() {
        if t / 2.0 < best.1 {
            best = (k, t / 2.0);
        }
    }
    Ok(best.0)
}
