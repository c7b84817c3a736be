//! Conditional perturbation of one covariate.
//!
//! A forest regresses `x_j` on the remaining columns. The perturbed column is
//! either the fitted value plus shuffled residuals (additive) or a value of
//! `x_j` drawn from the leaf that the row's other covariates fall into.

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{drop_column, Dataset, Task};
use crate::error::{invalid, Error, Result};
use crate::learners::{fit_random_forest, tune_forest_depth, ForestConfig, MaxFeatures, RandomForest};
use crate::rng::Stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    #[default]
    #[serde(alias = "add")]
    Additive,
    #[serde(alias = "leaf")]
    LeafSampling,
}

impl std::str::FromStr for Construction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" | "add" => Ok(Construction::Additive),
            "leaf" | "leaf_sampling" => Ok(Construction::LeafSampling),
            other => Err(Error::UnknownTag(other.to_string())),
        }
    }
}

/// Rows the conditional forest is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerFitSet {
    /// The evaluation rows themselves.
    #[default]
    Evaluation,
    /// The rows the outcome model was trained on.
    Training,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Forest settings; `max_depth` is taken from `depth_grid`.
    #[serde(default = "default_sampler_forest")]
    pub forest: ForestConfig,
    /// Candidate depths, chosen by 2-fold CV when more than one is given.
    /// `None` is unlimited depth.
    #[serde(default = "default_depth_grid")]
    pub depth_grid: Vec<Option<usize>>,
    #[serde(default = "default_construction")]
    pub construction: Construction,
    #[serde(default)]
    pub fit_set: SamplerFitSet,
}

/// Every split considers all conditioning columns, so a variable's few
/// correlated neighbours are not missed among many unrelated ones.
pub fn default_sampler_forest() -> ForestConfig {
    ForestConfig { max_features: MaxFeatures::All, ..ForestConfig::default() }
}

pub fn default_depth_grid() -> Vec<Option<usize>> {
    vec![Some(2), Some(5), Some(10), None]
}

fn default_construction() -> Construction {
    Construction::Additive
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            forest: default_sampler_forest(),
            depth_grid: default_depth_grid(),
            construction: Construction::Additive,
            fit_set: SamplerFitSet::Evaluation,
        }
    }
}

impl SamplerConfig {
    pub fn with_depth(mut self, depth: Option<usize>) -> Self {
        self.depth_grid = vec![depth];
        self
    }
}

/// Source of residual permutations for the additive construction.
#[derive(Debug, Clone)]
pub enum Shuffles {
    Random(Stream),
    /// `perms[b]` is used for draw `b`.
    Pinned(Vec<Vec<usize>>),
}

/// Fitted conditional model of `x_j` given the other covariates.
#[derive(Debug, Clone)]
pub struct ConditionalSampler {
    pub j: usize,
    pub forest: Option<RandomForest>,
    /// `x_j` on the evaluation rows.
    pub xj: Array1<f64>,
    /// Fitted values on the evaluation rows.
    pub xhat: Array1<f64>,
    /// `x_j - xhat` on the evaluation rows.
    pub residuals: Array1<f64>,
    pub construction: Construction,
    pub chosen_depth: Option<usize>,
    /// Other covariates of the evaluation rows, for leaf routing.
    x_cond: Array2<f64>,
    /// `x_j` on the forest's training rows; leaf members index into this.
    xj_fit: Array1<f64>,
}

/// Fit on the evaluation rows `x` and target column `j`.
pub fn fit_conditional(x: ArrayView2<f64>, j: usize, config: &SamplerConfig, stream: Stream) -> Result<ConditionalSampler> {
    fit_conditional_on(x, x, j, config, stream)
}

/// Fit the forest on `fit_x` and reconstruct on `eval_x`.
pub fn fit_conditional_on(
    fit_x: ArrayView2<f64>,
    eval_x: ArrayView2<f64>,
    j: usize,
    config: &SamplerConfig,
    stream: Stream,
) -> Result<ConditionalSampler> {
    let p = eval_x.ncols();
    if fit_x.ncols() != p {
        return Err(Error::DimensionMismatch { expected: p, got: fit_x.ncols() });
    }
    if j >= p {
        return invalid(format!("variable {j} out of range for {p} columns"));
    }
    if p < 2 {
        return Err(Error::EmptyConditioningSet(j));
    }
    if fit_x.nrows() < 4 || eval_x.nrows() < 1 {
        return invalid("conditional sampler needs at least four fitting rows");
    }
    if config.depth_grid.is_empty() {
        return invalid("depth grid is empty");
    }
    let xj_fit = fit_x.column(j).to_owned();
    let fit_data = Dataset::new(drop_column(fit_x, j), xj_fit.clone(), Task::Regression)?;
    let mut forest_cfg = config.forest.clone();
    // shrink the leaf floor when too few rows are available to split at all
    forest_cfg.min_leaf = forest_cfg.min_leaf.min(fit_data.n() / 4).max(1);
    let chosen_depth = if config.depth_grid.len() == 1 {
        config.depth_grid[0]
    } else {
        config.depth_grid[tune_forest_depth(&fit_data, &forest_cfg, &config.depth_grid, stream.tagged("depth-cv"))?]
    };
    let forest = fit_random_forest(&fit_data, &forest_cfg.with_depth(chosen_depth), stream.tagged("forest"))?;
    let x_cond = drop_column(eval_x, j);
    let xhat = forest.predict_raw(x_cond.view())?;
    let xj = eval_x.column(j).to_owned();
    let residuals = &xj - &xhat;
    Ok(ConditionalSampler {
        j,
        forest: Some(forest),
        xj,
        xhat,
        residuals,
        construction: config.construction,
        chosen_depth,
        x_cond,
        xj_fit,
    })
}

impl ConditionalSampler {
    /// Additive-only sampler from a known column and its fitted values.
    pub fn from_parts(j: usize, xj: Array1<f64>, xhat: Array1<f64>) -> Result<Self> {
        if xj.len() != xhat.len() {
            return Err(Error::DimensionMismatch { expected: xj.len(), got: xhat.len() });
        }
        let residuals = &xj - &xhat;
        Ok(ConditionalSampler {
            j,
            forest: None,
            x_cond: Array2::zeros((xj.len(), 0)),
            xj_fit: xj.clone(),
            xj,
            xhat,
            residuals,
            construction: Construction::Additive,
            chosen_depth: None,
        })
    }

    pub fn n(&self) -> usize {
        self.xhat.len()
    }

    /// `xhat + residuals[perm]`, evaluated as `x_j[perm] + (xhat - xhat[perm])`
    /// so that a fixed point of `perm` returns its original value bit for bit.
    pub fn reconstruct_additive_with(&self, perm: &[usize]) -> Result<Array1<f64>> {
        if perm.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: perm.len() });
        }
        if let Some(&bad) = perm.iter().find(|&&k| k >= self.n()) {
            return invalid(format!("permutation index {bad} out of range for {} rows", self.n()));
        }
        Ok(Array1::from_shape_fn(self.n(), |i| {
            let k = perm[i];
            self.xj[k] + (self.xhat[i] - self.xhat[k])
        }))
    }

    pub fn reconstruct_additive<R: Rng + ?Sized>(&self, rng: &mut R) -> Array1<f64> {
        let mut perm: Vec<usize> = (0..self.n()).collect();
        perm.shuffle(rng);
        self.reconstruct_additive_with(&perm).expect("permutation has the right length")
    }

    /// Per row: a uniformly chosen tree, then a uniformly chosen training
    /// value of `x_j` from the leaf reached by the row's other covariates.
    pub fn reconstruct_leaf_sampling<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Array1<f64>> {
        let forest = self.forest.as_ref().ok_or_else(|| Error::InvalidArgument("leaf sampling needs a fitted forest".into()))?;
        let k = forest.trees.len();
        Ok(self
            .x_cond
            .rows()
            .into_iter()
            .map(|row| {
                let tree = &forest.trees[rng.random_range(0..k)];
                let (_, members) = tree.leaf(row);
                self.xj_fit[members[rng.random_range(0..members.len())] as usize]
            })
            .collect())
    }

    /// `b` perturbed columns stacked as an `n × b` matrix.
    pub fn draw_columns(&self, b: usize, shuffles: &Shuffles) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((self.n(), b));
        for k in 0..b {
            let col = match (self.construction, shuffles) {
                (Construction::Additive, Shuffles::Pinned(perms)) => {
                    let perm = perms.get(k).ok_or_else(|| Error::InvalidArgument(format!("no pinned permutation for draw {k}")))?;
                    self.reconstruct_additive_with(perm)?
                }
                (Construction::Additive, Shuffles::Random(s)) => self.reconstruct_additive(&mut s.child(k as u64).rng()),
                (Construction::LeafSampling, Shuffles::Random(s)) => self.reconstruct_leaf_sampling(&mut s.child(k as u64).rng())?,
                (Construction::LeafSampling, Shuffles::Pinned(_)) => {
                    return invalid("pinned permutations only apply to the additive construction")
                }
            };
            out.column_mut(k).assign(&col);
        }
        Ok(out)
    }
}
