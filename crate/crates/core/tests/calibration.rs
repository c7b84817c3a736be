//! Monte-Carlo checks of distributional claims. Seeds are fixed, so every
//! outcome is reproducible; tolerances are the stated sampling bands.

use cpi_core::condsampler::{fit_conditional, Construction, SamplerConfig, Shuffles};
use cpi_core::inference::{
    cpi_importance, loco_importance, marginal_importance, pi_importance, CpiConfig, WaldMode,
};
use cpi_core::learners::{make_crossfit_with, ForestConfig, Learner, LearnerSpec, MaxFeatures, LinearModel};
use cpi_core::linalg::least_squares;
use cpi_core::metrics::{ks_normality, ks_statistic, ks_two_sample, qq_max_deviation, qq_points, type1_error};
use cpi_core::simgen::{sample_gaussian_design, Scenario, ScenarioSpec};
use cpi_core::stats::{correlation, normal_cdf};
use cpi_core::{Dataset, Stream, Task};
use ndarray::{concatenate, Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn gaussian(n: usize, p: usize, seed: u64) -> Array2<f64> {
    let mut rng = Stream::new(seed).rng();
    Array2::from_shape_simple_fn((n, p), || normal(&mut rng))
}

fn binomial_band(alpha: f64, trials: usize) -> f64 {
    2.0 * (alpha * (1.0 - alpha) / trials as f64).sqrt()
}

/// Design with `x_0 = x_1·0.7 − x_2·0.4 + δ`, `δ ~ N(0, 0.5²)`, columns 1..3 i.i.d.
fn dependent_design(n: usize, seed: u64) -> Array2<f64> {
    let mut x = gaussian(n, 4, seed);
    let mut rng = Stream::new(seed).tagged("delta").rng();
    for mut row in x.rows_mut() {
        row[0] = 0.7 * row[1] - 0.4 * row[2] + 0.5 * normal(&mut rng);
    }
    x
}

fn with_intercept(x: &Array2<f64>) -> Array2<f64> {
    concatenate![Axis(1), Array2::ones((x.nrows(), 1)), *x]
}

/// OLS coefficients and their classical standard errors.
fn ols(x: &Array2<f64>, y: &Array1<f64>) -> (Array1<f64>, Array1<f64>) {
    let beta = least_squares(x.view(), y.view()).unwrap();
    let resid = y - &x.dot(&beta);
    let (n, k) = x.dim();
    let s2 = resid.dot(&resid) / (n - k) as f64;
    let gram = x.t().dot(x);
    let se = (0..k)
        .map(|c| {
            let mut e = Array1::zeros(k);
            e[c] = 1.0;
            (s2 * cpi_core::linalg::solve_spd(gram.view(), e.view()).unwrap()[c]).sqrt()
        })
        .collect();
    (beta, se)
}

#[test]
fn design_covariance_converges() {
    let spec = ScenarioSpec::new(Scenario::PlainLinear, 10_000, 20, 0.8).with_seed(4);
    let x = sample_gaussian_design(&spec).unwrap();
    let sigma = spec.covariance().unwrap().matrix();
    let n = x.nrows() as f64;
    let emp = x.t().dot(&x) / n;
    let dist = (&emp - &sigma).mapv(|v| v * v).sum().sqrt();
    // E‖S − Σ‖²_F = (1/n) Σ_ij (Σ_ij² + Σ_ii Σ_jj) for zero-mean Gaussian rows
    let diag = sigma.diag();
    let expected = ((sigma.mapv(|v| v * v).sum() + diag.sum().powi(2)) / n).sqrt();
    assert!(dist < 3.0 * expected, "{dist} vs 3 × {expected}");
}

#[test]
fn classification_rate_matches_probit_mean() {
    let spec = ScenarioSpec::new(Scenario::Classification, 20_000, 20, 0.5).with_seed(8);
    let sim = spec.simulate().unwrap();
    let beta = Array1::from(sim.truth.beta_main.clone());
    let probs = sim.data.x.dot(&beta).mapv(normal_cdf);
    assert!(sim.data.y.iter().all(|&v| v == 0.0 || v == 1.0));
    let n = probs.len() as f64;
    let se = (probs.iter().map(|p| p * (1.0 - p)).sum::<f64>()).sqrt() / n;
    let gap = (sim.data.y.mean().unwrap() - probs.mean().unwrap()).abs();
    assert!(gap < 3.0 * se, "gap {gap}, se {se}");
}

#[test]
fn additive_draws_keep_correlation_with_fitted_values() {
    let x = dependent_design(2000, 1);
    let s = fit_conditional(x.view(), 0, &SamplerConfig::default(), Stream::new(2)).unwrap();
    let xhat = s.xhat.to_vec();
    let target = correlation(&s.xj.to_vec(), &xhat);
    let draws = s.draw_columns(100, &Shuffles::Random(Stream::new(3))).unwrap();
    let avg = draws.columns().into_iter().map(|c| correlation(&c.to_vec(), &xhat)).sum::<f64>() / 100.0;
    assert!((avg - target).abs() <= 0.05, "corr(x̃, x̂) = {avg}, corr(x, x̂) = {target}");
}

#[test]
fn additive_draws_retain_linear_dependence() {
    let x = dependent_design(2000, 5);
    let s = fit_conditional(x.view(), 0, &SamplerConfig::default(), Stream::new(6)).unwrap();
    let design = with_intercept(&x.slice(ndarray::s![.., 1..]).to_owned());
    let (b_orig, _) = ols(&design, &s.xj);
    let (b_hat, _) = ols(&design, &s.xhat);
    let drawn = s.draw_columns(1, &Shuffles::Random(Stream::new(7))).unwrap().column(0).to_owned();
    let (b_new, se_new) = ols(&design, &drawn);
    for c in 1..design.ncols() {
        // shuffled residuals are independent of the design, so draws regress like x̂
        assert!((b_new[c] - b_hat[c]).abs() <= 3.0 * se_new[c], "coef {c}: draw {} vs x̂ {}", b_new[c], b_hat[c]);
        // forest smoothing shrinks x̂ toward the mean a little, never by much
        assert!((b_hat[c] - b_orig[c]).abs() <= 0.1 * b_orig[c].abs().max(0.1), "coef {c}: x̂ {} vs x {}", b_hat[c], b_orig[c]);
    }
}

#[test]
fn independent_shuffle_streams_are_exchangeable() {
    let x = dependent_design(1000, 9);
    let s = fit_conditional(x.view(), 0, &SamplerConfig::default(), Stream::new(10)).unwrap();
    let a = s.draw_columns(5, &Shuffles::Random(Stream::new(11))).unwrap();
    let b = s.draw_columns(5, &Shuffles::Random(Stream::new(12))).unwrap();
    let (_, p) = ks_two_sample(&a.iter().copied().collect::<Vec<_>>(), &b.iter().copied().collect::<Vec<_>>()).unwrap();
    assert!(p > 0.01, "two-sample KS p = {p}");
}

#[test]
fn leaf_sampling_recovers_the_marginal_of_an_independent_column() {
    let x = gaussian(2000, 4, 14);
    let cfg = SamplerConfig { construction: Construction::LeafSampling, ..Default::default() };
    let s = fit_conditional(x.view(), 2, &cfg, Stream::new(15)).unwrap();
    let drawn = s.draw_columns(1, &Shuffles::Random(Stream::new(16))).unwrap();
    let (a, b) = (drawn.column(0).to_vec(), x.column(2).to_vec());
    let (d, _) = ks_two_sample(&a, &b).unwrap();
    assert!(d < 0.05, "KS distance {d}");
}

#[test]
fn ks_accepts_true_normals() {
    let accepted = (0..100u64)
        .filter(|&seed| {
            let mut rng = Stream::new(seed).tagged("ks").rng();
            let z: Vec<f64> = (0..1000).map(|_| normal(&mut rng)).collect();
            ks_normality(&z).unwrap().1 > 0.01
        })
        .count();
    assert!(accepted >= 98, "{accepted}/100");
    let (d, p) = ks_normality(&[3.0; 30]).unwrap();
    assert!((d - normal_cdf(3.0)).abs() < 1e-12 && p < 1e-12);
    assert!(ks_statistic(&[0.0], normal_cdf) == 0.5);
}

#[test]
fn uniform_pvalues_hug_the_qq_diagonal() {
    let within = (0..100u64)
        .filter(|&seed| {
            let mut rng = Stream::new(seed).tagged("qq").rng();
            let p: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
            qq_max_deviation(&qq_points(&p).unwrap()) < 0.06
        })
        .count();
    assert!(within >= 95, "{within}/100");

    let mut rng = Stream::new(77).rng();
    let p: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
    let t1 = type1_error(&p, &vec![false; 1000], 0.05).unwrap();
    assert!((t1 - 0.05).abs() <= binomial_band(0.05, 1000), "{t1}");
}

#[test]
fn marginal_t_test_is_calibrated_on_noise() {
    let runs = 1000;
    let rejections = (0..runs as u64)
        .filter(|&seed| {
            let x = gaussian(50, 1, seed);
            let mut rng = Stream::new(seed).tagged("y").rng();
            let y = Array1::from_shape_simple_fn(50, || normal(&mut rng));
            let d = Dataset::new(x, y, Task::Regression).unwrap();
            marginal_importance(&d).unwrap().variables[0].pvalue < 0.05
        })
        .count();
    let rate = rejections as f64 / runs as f64;
    assert!((rate - 0.05).abs() <= binomial_band(0.05, runs), "rejection rate {rate}");

    let x = gaussian(100, 2, 3);
    let mut rng = Stream::new(4).rng();
    let y = Array1::from_shape_fn(100, |i| 2.0 * x[[i, 0]] + 1e-3 * normal(&mut rng));
    let r = marginal_importance(&Dataset::new(x, y, Task::Regression).unwrap()).unwrap();
    assert!(r.variables[0].pvalue < 1e-12 && r.variables[0].rank == 1);
}

fn small_forest() -> LearnerSpec {
    LearnerSpec::Forest { config: ForestConfig { n_trees: 30, ..Default::default() } }
}

#[test]
fn loco_sees_signal_and_ignores_duplicates() {
    // y = 3 x0 + x2 + ε, with x1 an exact copy of x0
    let mut x = gaussian(400, 4, 21);
    let copy = x.column(0).to_owned();
    x.column_mut(1).assign(&copy);
    let mut rng = Stream::new(22).rng();
    let y = Array1::from_shape_fn(400, |i| 3.0 * x[[i, 0]] + x[[i, 2]] + 0.5 * normal(&mut rng));
    let d = Dataset::new(x, y, Task::Regression).unwrap();
    let cf = cpi_core::learners::make_crossfit(&d, &small_forest(), Stream::new(23)).unwrap();
    let r = loco_importance(&d, &cf, WaldMode::StandardError, Stream::new(24)).unwrap();
    let m: Vec<f64> = r.means();
    assert!(m[2] > 0.5, "informative x2: {m:?}");
    assert!(m[1].abs() < 0.25 * m[2], "duplicate x1 should be near 0: {m:?}");
    assert!(r.variables[2].pvalue < 0.05);
}

fn loco_null_run(spec: &LearnerSpec) -> (f64, f64) {
    let runs = 40;
    let (mut hits, mut trials, mut total) = (0usize, 0usize, 0.0);
    for seed in 0..runs as u64 {
        let x = gaussian(120, 3, 100 + seed);
        let mut rng = Stream::new(200 + seed).rng();
        let y = Array1::from_shape_fn(120, |i| 2.0 * x[[i, 0]] + normal(&mut rng));
        let d = Dataset::new(x, y, Task::Regression).unwrap();
        let cf = cpi_core::learners::make_crossfit(&d, spec, Stream::new(300 + seed)).unwrap();
        let r = loco_importance(&d, &cf, WaldMode::StandardError, Stream::new(400 + seed)).unwrap();
        for v in &r.variables[1..] {
            trials += 1;
            hits += usize::from(v.pvalue < 0.05);
            total += v.mean;
        }
    }
    let rate = hits as f64 / trials as f64;
    assert!(rate <= 0.05 + binomial_band(0.05, trials), "LOCO null rejection {rate}");
    (rate, total / trials as f64)
}

#[test]
fn loco_controls_type1_error_on_independent_nulls() {
    // searching every column per split, a dropped null changes nothing systematic
    let full = LearnerSpec::Forest { config: ForestConfig { n_trees: 30, max_features: MaxFeatures::All, ..Default::default() } };
    let (_, mean) = loco_null_run(&full);
    assert!(mean.abs() < 0.1, "mean null importance {mean}");

    // with one column per split, dropping a null makes the signal easier to
    // pick, so the refit wins and null importance turns negative
    let (_, mean) = loco_null_run(&small_forest());
    assert!(mean < 0.0, "mean null importance {mean}");
}

#[test]
fn depth_zero_cpi_matches_pi_on_independent_columns() {
    let runs = 50;
    let (mut cpi_hits, mut pi_hits, mut trials) = (0usize, 0usize, 0usize);
    for seed in 0..runs as u64 {
        let x = gaussian(200, 5, 500 + seed);
        let mut rng = Stream::new(600 + seed).rng();
        let y = Array1::from_shape_fn(200, |i| x[[i, 0]] + normal(&mut rng));
        let d = Dataset::new(x, y, Task::Regression).unwrap();
        let cf = make_crossfit_with(&d, Stream::new(700 + seed), |train, _| {
            let w = least_squares(train.x(), train.y()).unwrap();
            Ok(Box::new(LinearModel::new(w, 0.0, Task::Regression)) as Box<dyn Learner>)
        })
        .unwrap();
        let cfg = CpiConfig { b: 20, sampler: SamplerConfig::default().with_depth(Some(0)), ..Default::default() };
        let s = Stream::new(800 + seed);
        let cpi = cpi_importance(&d, &cf, &cfg, s).unwrap();
        let pi = pi_importance(&d, &cf, 20, WaldMode::StandardError, s).unwrap();
        for j in 1..5 {
            trials += 1;
            cpi_hits += usize::from(cpi.variables[j].pvalue < 0.05);
            pi_hits += usize::from(pi.variables[j].pvalue < 0.05);
        }
    }
    let (a, b) = (cpi_hits as f64 / trials as f64, pi_hits as f64 / trials as f64);
    let se = ((a * (1.0 - a) + b * (1.0 - b)) / trials as f64).sqrt();
    assert!((a - b).abs() <= 2.0 * se, "cpi {a} vs pi {b}");
}
