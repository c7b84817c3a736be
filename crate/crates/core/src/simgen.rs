//! Synthetic designs and outcome models.
//!
//! Covariates are Gaussian with an equal-correlation block covariance. Outcomes
//! follow one of several generative models; every draw comes from a stream
//! derived from the scenario seed so a spec fully determines its data.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{invalid, Error, Result};
use crate::linalg::cholesky;
use crate::rng::Stream;
use crate::stats::normal_cdf;

/// Nonzero coefficient values.
pub const COEFFICIENT_SET: [f64; 8] = [3.0, -3.0, 2.0, -2.0, 1.0, -1.0, 0.5, -0.5];

/// Outcome-generating model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Exp1,
    Classification,
    PlainLinear,
    ReluLinear,
    InteractionsOnly,
    MainPlusInteractions,
    /// Outcome is pure Gaussian noise, independent of the design.
    Null,
}

impl Scenario {
    pub fn task(self) -> Task {
        match self {
            Scenario::Classification => Task::Binary,
            _ => Task::Regression,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Exp1 => "exp1",
            Scenario::Classification => "classification",
            Scenario::PlainLinear => "plain_linear",
            Scenario::ReluLinear => "relu_linear",
            Scenario::InteractionsOnly => "interactions_only",
            Scenario::MainPlusInteractions => "main_plus_interactions",
            Scenario::Null => "null",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::UnknownTag(s.to_string()))
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Equal-correlation block covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockCovariance {
    pub p: usize,
    pub n_blocks: usize,
    pub rho: f64,
}

impl BlockCovariance {
    pub fn new(p: usize, n_blocks: usize, rho: f64) -> Result<Self> {
        if n_blocks == 0 || p == 0 || p % n_blocks != 0 {
            return invalid(format!("p = {p} is not divisible into {n_blocks} equal blocks"));
        }
        if !(0.0..1.0).contains(&rho) {
            return invalid(format!("rho = {rho} outside [0, 1)"));
        }
        Ok(BlockCovariance { p, n_blocks, rho })
    }

    pub fn block_size(&self) -> usize {
        self.p / self.n_blocks
    }

    pub fn block_of(&self, j: usize) -> usize {
        j / self.block_size()
    }

    pub fn matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.p, self.p), |(i, j)| {
            if i == j {
                1.0
            } else if self.block_of(i) == self.block_of(j) {
                self.rho
            } else {
                0.0
            }
        })
    }
}

pub fn build_block_covariance(p: usize, n_blocks: usize, rho: f64) -> Result<Array2<f64>> {
    Ok(BlockCovariance::new(p, n_blocks, rho)?.matrix())
}

fn default_blocks() -> usize {
    10
}

fn default_snr() -> f64 {
    4.0
}

fn default_signal() -> usize {
    20
}

/// Complete description of one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawScenarioSpec")]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub snr: f64,
    pub n_signal: usize,
    pub n_blocks: usize,
    pub seed: u64,
}

/// Serialized form; absent fields take the scenario's defaults.
#[derive(Deserialize)]
struct RawScenarioSpec {
    scenario: Scenario,
    n: usize,
    p: usize,
    rho: f64,
    snr: Option<f64>,
    n_signal: Option<usize>,
    n_blocks: Option<usize>,
    #[serde(default)]
    seed: u64,
}

impl From<RawScenarioSpec> for ScenarioSpec {
    fn from(r: RawScenarioSpec) -> Self {
        let d = ScenarioSpec::new(r.scenario, r.n, r.p, r.rho);
        ScenarioSpec {
            snr: r.snr.unwrap_or(d.snr),
            n_signal: r.n_signal.unwrap_or(d.n_signal),
            n_blocks: r.n_blocks.unwrap_or(d.n_blocks),
            seed: r.seed,
            ..d
        }
    }
}

impl ScenarioSpec {
    pub fn new(scenario: Scenario, n: usize, p: usize, rho: f64) -> Self {
        let n_signal = match scenario {
            Scenario::Exp1 => 5,
            Scenario::Null => 0,
            _ => default_signal().min(p),
        };
        ScenarioSpec { scenario, n, p, rho, snr: default_snr(), n_signal, n_blocks: default_blocks(), seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return invalid("n must be at least 2");
        }
        if self.n_signal > self.p {
            return invalid(format!("n_signal = {} exceeds p = {}", self.n_signal, self.p));
        }
        if !(self.snr > 0.0) {
            return invalid("snr must be positive");
        }
        match self.scenario {
            Scenario::Exp1 if self.p < 41 => {
                return invalid(format!("exp1 uses variable 41 and needs p >= 41, got {}", self.p))
            }
            Scenario::Exp1 if self.n_signal != 5 => return invalid("exp1 has exactly 5 informative variables"),
            Scenario::Null if self.n_signal != 0 => return invalid("null scenario has no informative variables"),
            _ => {}
        }
        BlockCovariance::new(self.p, self.n_blocks, self.rho).map(|_| ())
    }

    pub fn covariance(&self) -> Result<BlockCovariance> {
        BlockCovariance::new(self.p, self.n_blocks, self.rho)
    }

    fn stream(&self) -> Stream {
        Stream::new(self.seed)
    }

    /// Design, outcome and ground truth for this spec.
    pub fn simulate(&self) -> Result<Simulated> {
        let x = sample_gaussian_design(self)?;
        let (y, truth) = gen_outcome_scenario(x.view(), self)?;
        Ok(Simulated { data: Dataset::new(x, y, self.scenario.task())?, truth })
    }
}

/// Simulated dataset with its generating truth.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub data: Dataset,
    pub truth: GroundTruth,
}

/// True model behind a simulated outcome. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth {
    pub support: Vec<bool>,
    pub beta_main: Vec<f64>,
    pub beta_quad: BTreeMap<(usize, usize), f64>,
}

impl GroundTruth {
    pub fn n_signal(&self) -> usize {
        self.support.iter().filter(|&&s| s).count()
    }

    /// JSON form with 1-based variable indices, matching `x1..xp` column names.
    pub fn to_json(&self) -> serde_json::Value {
        let quad: serde_json::Map<String, serde_json::Value> = self
            .beta_quad
            .iter()
            .map(|(&(k, j), &v)| (format!("{},{}", k + 1, j + 1), serde_json::json!(v)))
            .collect();
        serde_json::json!({
            "support": self.support,
            "beta_main": self.beta_main,
            "beta_quad": quad,
        })
    }
}

/// Rows i.i.d. `N(0, Σ)` via a Cholesky transform of standard normal draws.
pub fn sample_gaussian_design(spec: &ScenarioSpec) -> Result<Array2<f64>> {
    spec.validate()?;
    let sigma = spec.covariance()?.matrix();
    let l = cholesky(sigma.view()).expect("block covariance with rho in [0,1) is PSD");
    let mut rng = spec.stream().tagged("design").rng();
    let z = Array2::from_shape_simple_fn((spec.n, spec.p), || StandardNormal.sample(&mut rng));
    Ok(z.dot(&l.t()))
}

/// Experiment-1 outcome: variables 1, 11, 21, 31, 41 (1-based) drive `y`.
pub fn exp1_signal(row: ArrayView1<f64>) -> f64 {
    let (a, b, c, d, e) = (row[0], row[10], row[20], row[30], row[40]);
    a + 2.0 * (1.0 + 2.0 * b * b + (c + 1.0) * (c + 1.0)).ln() + d * e
}

pub fn gen_outcome_exp1(x: ArrayView2<f64>, stream: Stream) -> Result<(Array1<f64>, GroundTruth)> {
    let p = x.ncols();
    if p < 41 {
        return invalid(format!("exp1 uses variable 41 and needs p >= 41, got {p}"));
    }
    let mut rng = stream.tagged("noise").rng();
    let y = x
        .axis_iter(Axis(0))
        .map(|row| exp1_signal(row) + rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut truth = GroundTruth { support: vec![false; p], beta_main: vec![0.0; p], beta_quad: BTreeMap::new() };
    for j in [0, 10, 20, 30, 40] {
        truth.support[j] = true;
    }
    truth.beta_main[0] = 1.0;
    truth.beta_quad.insert((30, 40), 1.0);
    Ok((y, truth))
}

/// Coefficient vector with the first `n_signal` entries drawn from [`COEFFICIENT_SET`].
pub fn draw_beta<R: Rng + ?Sized>(rng: &mut R, p: usize, n_signal: usize) -> Array1<f64> {
    let mut beta = Array1::zeros(p);
    for b in beta.iter_mut().take(n_signal.min(p)) {
        *b = COEFFICIENT_SET[rng.random_range(0..COEFFICIENT_SET.len())];
    }
    beta
}

fn draw_quad<R: Rng + ?Sized>(rng: &mut R, n_signal: usize) -> BTreeMap<(usize, usize), f64> {
    let mut quad = BTreeMap::new();
    for k in 0..n_signal {
        for j in (k + 1)..n_signal {
            quad.insert((k, j), COEFFICIENT_SET[rng.random_range(0..COEFFICIENT_SET.len())]);
        }
    }
    quad
}

/// `Σ_{k<j} β_kj x_k x_j` for one row.
pub fn quad_term(row: ArrayView1<f64>, beta_quad: &BTreeMap<(usize, usize), f64>) -> f64 {
    beta_quad.iter().map(|(&(k, j), &b)| b * row[k] * row[j]).sum()
}

/// Noise magnitude `‖signal‖₂ / (snr √n)`.
pub fn noise_scale(signal: ArrayView1<f64>, snr: f64) -> f64 {
    signal.dot(&signal).sqrt() / (snr * (signal.len() as f64).sqrt())
}

/// Assemble an outcome from its deterministic parts.
///
/// `eps` are standard normal noise draws and `u` uniform draws on [0,1), used
/// only by the classification model.
pub fn compose_outcome(
    x: ArrayView2<f64>,
    scenario: Scenario,
    truth: &GroundTruth,
    snr: f64,
    eps: ArrayView1<f64>,
    u: ArrayView1<f64>,
) -> Result<Array1<f64>> {
    let beta = Array1::from(truth.beta_main.clone());
    let linear = || x.dot(&beta);
    let quad = || -> Array1<f64> { x.axis_iter(Axis(0)).map(|r| quad_term(r, &truth.beta_quad)).collect() };
    let with_noise = |signal: Array1<f64>| {
        let sigma = noise_scale(signal.view(), snr);
        signal + &(&eps * sigma)
    };
    Ok(match scenario {
        Scenario::Classification => {
            let s = linear();
            s.iter().zip(u).map(|(&v, &ui)| if ui < normal_cdf(v) { 1.0 } else { 0.0 }).collect()
        }
        Scenario::PlainLinear => with_noise(linear()),
        Scenario::ReluLinear => with_noise(linear()).mapv(|v| v.max(0.0)),
        Scenario::InteractionsOnly => with_noise(quad()),
        Scenario::MainPlusInteractions => with_noise(linear() + quad()),
        Scenario::Null => eps.to_owned(),
        Scenario::Exp1 => x.axis_iter(Axis(0)).zip(eps).map(|(r, &e)| exp1_signal(r) + e).collect(),
    })
}

pub fn gen_outcome_scenario(x: ArrayView2<f64>, spec: &ScenarioSpec) -> Result<(Array1<f64>, GroundTruth)> {
    if x.ncols() != spec.p {
        return Err(Error::DimensionMismatch { expected: spec.p, got: x.ncols() });
    }
    let stream = spec.stream().tagged("outcome");
    if spec.scenario == Scenario::Exp1 {
        return gen_outcome_exp1(x, stream);
    }
    if spec.n_signal > spec.p {
        return invalid(format!("n_signal = {} exceeds p = {}", spec.n_signal, spec.p));
    }
    let p = spec.p;
    let mut beta_rng = stream.tagged("beta").rng();
    let mut truth = GroundTruth { support: vec![false; p], beta_main: vec![0.0; p], beta_quad: BTreeMap::new() };
    let main = matches!(
        spec.scenario,
        Scenario::Classification | Scenario::PlainLinear | Scenario::ReluLinear | Scenario::MainPlusInteractions
    );
    let interactions = matches!(spec.scenario, Scenario::InteractionsOnly | Scenario::MainPlusInteractions);
    if main {
        truth.beta_main = draw_beta(&mut beta_rng, p, spec.n_signal).to_vec();
    }
    if interactions {
        truth.beta_quad = draw_quad(&mut beta_rng, spec.n_signal);
    }
    if spec.scenario != Scenario::Null {
        for s in truth.support.iter_mut().take(spec.n_signal) {
            *s = true;
        }
    }
    let n = x.nrows();
    let mut noise_rng = stream.tagged("noise").rng();
    let eps = Array1::from_shape_simple_fn(n, || noise_rng.sample(StandardNormal));
    let u = Array1::from_shape_simple_fn(n, || noise_rng.random::<f64>());
    let y = compose_outcome(x, spec.scenario, &truth, spec.snr, eps.view(), u.view())?;
    Ok((y, truth))
}
