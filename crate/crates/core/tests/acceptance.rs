//! Acceptance suite. Every check prints one `PASS`/`FAIL` line before asserting.
//!
//! The bench-backed checks are slow (tens of minutes on one core). They run
//! under `cargo test` like everything else; there is no opt-out flag.

use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use cpi_core::bench::{aggregate, run_bench, BenchConfig, MethodEntry, RunRecord, ScenarioEntry};
use cpi_core::condsampler::{fit_conditional, ConditionalSampler, SamplerConfig, Shuffles};
use cpi_core::inference::{cpi_single, pi_single, summarize_losses, Method, WaldMode};
use cpi_core::learners::{flatten, LinearModel, Mlp};
use cpi_core::linalg::{cholesky, solve_spd};
use cpi_core::metrics::{dkw_bound, ks_normality, qq_max_deviation, qq_points};
use cpi_core::simgen::{Scenario, ScenarioSpec};
use cpi_core::stats::{normal_cdf, normal_sf};
use cpi_core::{Dataset, LearnerSpec, Stream, Task};
use ndarray::{array, Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

// straight to the stdout handle: the harness only captures the print macros,
// so the verdicts show up in a plain `cargo test` log
fn verdict(id: u32, ok: bool, detail: String) {
    let line = format!("acceptance {id}: {} | {detail}\n", if ok { "PASS" } else { "FAIL" });
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).expect("stdout");
    out.flush().expect("stdout");
}

fn binomial_margin(alpha: f64, trials: usize) -> f64 {
    2.0 * (alpha * (1.0 - alpha) / trials as f64).sqrt()
}

fn scratch(name: &str) -> tempfile::TempDir {
    tempfile::Builder::new().prefix(name).tempdir().unwrap()
}

/// Pooled type-I error over the given records (null variables only).
fn pooled_type1(records: &[&RunRecord], alpha: f64) -> (f64, usize) {
    let (mut hits, mut trials) = (0usize, 0usize);
    for r in records {
        let report = r.report.as_ref().expect("run failed");
        let truth = r.spec.simulate().unwrap().truth;
        for v in &report.variables {
            if !truth.support[v.index] {
                trials += 1;
                hits += usize::from(v.pvalue < alpha);
            }
        }
    }
    (hits as f64 / trials as f64, trials)
}

fn exp1_spec(rho: f64) -> ScenarioSpec {
    ScenarioSpec::new(Scenario::Exp1, 300, 50, rho)
}

/// One bench shared by the type-I contrast and the sampler-depth check.
fn exp1_records() -> &'static Vec<RunRecord> {
    static RECORDS: OnceLock<Vec<RunRecord>> = OnceLock::new();
    RECORDS.get_or_init(|| {
        let mlp = LearnerSpec::default();
        let mut cfg = BenchConfig::new(
            vec![ScenarioEntry::new(exp1_spec(0.0)), ScenarioEntry::new(exp1_spec(0.8))],
            vec![
                MethodEntry::new(Method::Cpi, mlp.clone()),
                MethodEntry::new(Method::Pi, mlp.clone()),
                MethodEntry::new(Method::Cpi, mlp).with_sampler_depth(1),
            ],
        );
        cfg.runs = 30;
        cfg.b = 50;
        cfg.seed = 2024;
        let dir = scratch("acc-exp1");
        let t = Instant::now();
        let records = run_bench(&cfg, dir.path(), false).unwrap();
        println!("exp1 desk bench: {} records in {:.0}s", records.len(), t.elapsed().as_secs_f64());
        records
    })
}

fn select<'a>(records: &'a [RunRecord], rho: f64, method: &str, max_run: usize) -> Vec<&'a RunRecord> {
    records.iter().filter(|r| r.spec.rho == rho && r.method == method && r.run < max_run).collect()
}

#[test]
fn acceptance_1_type1_error_contrast() {
    let records = exp1_records();
    let alpha = 0.05;
    let mut ok = true;
    let mut detail = Vec::new();
    for rho in [0.0, 0.8] {
        let (t1, trials) = pooled_type1(&select(records, rho, "cpi-mlp", usize::MAX), alpha);
        let bound = alpha + binomial_margin(alpha, trials);
        ok &= t1 <= bound;
        detail.push(format!("cpi rho={rho}: {t1:.4} (<= {bound:.4})"));
    }
    let (t1_pi, trials) = pooled_type1(&select(records, 0.8, "pi-mlp", usize::MAX), alpha);
    let bound = alpha + binomial_margin(alpha, trials);
    ok &= t1_pi > bound;
    detail.push(format!("pi rho=0.8: {t1_pi:.4} (> {bound:.4})"));
    verdict(1, ok, detail.join(", "));
    assert!(ok);
}

#[test]
fn acceptance_2_auc_ranking_quality() {
    let t = Instant::now();
    let mlp = LearnerSpec::default();
    let mut cfg = BenchConfig::new(
        vec![
            ScenarioEntry::new(ScenarioSpec::new(Scenario::PlainLinear, 1000, 50, 0.8)),
            ScenarioEntry::new(ScenarioSpec::new(Scenario::InteractionsOnly, 1000, 50, 0.8)),
        ],
        vec![MethodEntry::new(Method::Cpi, mlp.clone()), MethodEntry::new(Method::Marginal, mlp)],
    );
    cfg.runs = 20;
    cfg.seed = 7;
    let dir = scratch("acc-auc");
    let records = run_bench(&cfg, dir.path(), false).unwrap();
    let summary = aggregate(&records, cfg.alpha);
    let auc = |scenario: Scenario, method: &str| {
        summary
            .rows
            .iter()
            .find(|r| r.scenario.starts_with(scenario.as_str()) && r.method == method && r.metric == "auc")
            .unwrap()
            .mean
    };
    let linear_cpi = auc(Scenario::PlainLinear, "cpi-mlp");
    let inter_cpi = auc(Scenario::InteractionsOnly, "cpi-mlp");
    let inter_marginal = auc(Scenario::InteractionsOnly, "marginal");
    let ok = linear_cpi >= 0.85 && inter_marginal <= inter_cpi - 0.1;
    verdict(
        2,
        ok,
        format!(
            "plain_linear cpi-mlp auc {linear_cpi:.3} (>= 0.85); interactions_only marginal {inter_marginal:.3} vs cpi-mlp {inter_cpi:.3}; {:.0}s",
            t.elapsed().as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn acceptance_3_null_statistic_normality() {
    let mut cfg = BenchConfig::new(
        vec![ScenarioEntry::new(ScenarioSpec::new(Scenario::Null, 1000, 20, 0.8))],
        vec![MethodEntry::new(Method::Cpi, LearnerSpec::default())],
    );
    cfg.runs = 10;
    cfg.seed = 11;
    let dir = scratch("acc-null");
    let records = run_bench(&cfg, dir.path(), false).unwrap();
    let z: Vec<f64> = records.iter().flat_map(|r| r.report.as_ref().unwrap().zscores()).collect();
    assert_eq!(z.len(), 200);
    let (d, ks_p) = ks_normality(&z).unwrap();
    // QQ on the probability scale: Φ(z) should be uniform
    let u: Vec<f64> = z.iter().map(|&v| normal_cdf(v)).collect();
    let dev = qq_max_deviation(&qq_points(&u).unwrap());
    let band = dkw_bound(z.len(), 0.01);
    let ok = ks_p >= 0.01 && dev < band;
    verdict(3, ok, format!("KS D={d:.4} p={ks_p:.3} (>= 0.01); QQ max dev {dev:.4} (< DKW {band:.4})"));
    assert!(ok);
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[test]
fn acceptance_4_correlated_null_bias_oracle() {
    // x0 = X_rest·u + δ, outcome ignores x0, fitted weights leak onto x0
    let sigma_rest = array![[1.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let u = array![0.6, -0.4, 0.3];
    let w = array![0.0, 1.5, -1.0, 0.5];
    let noise_delta = 0.6;
    let chol = cholesky(sigma_rest.view()).unwrap();
    let draw = |n: usize, seed: u64| {
        let mut rng = Stream::new(seed).rng();
        let z = Array2::from_shape_simple_fn((n, 3), || gaussian(&mut rng));
        let rest = z.dot(&chol.t());
        let mut x = Array2::zeros((n, 4));
        x.column_mut(0).assign(&(rest.dot(&u) + Array1::from_shape_simple_fn(n, || noise_delta * gaussian(&mut rng))));
        x.slice_mut(ndarray::s![.., 1..]).assign(&rest);
        let y = x.dot(&w) + Array1::from_shape_simple_fn(n, || gaussian(&mut rng));
        Dataset::new(x, y, Task::Regression).unwrap()
    };

    // ridge fit on a small training set shrinks the true weights and spreads them onto x0
    let train = draw(200, 1);
    let lambda = 150.0;
    let gram = train.x().t().dot(&train.x()) + Array2::<f64>::eye(4) * lambda;
    let w_hat = solve_spd(gram.view(), train.x().t().dot(&train.y()).view()).unwrap();
    let model = LinearModel::new(w_hat.clone(), 0.0, Task::Regression);

    let gap = &w.slice(ndarray::s![1..]) - &w_hat.slice(ndarray::s![1..]);
    let limit = 2.0 * w_hat[0] * u.dot(&sigma_rest.dot(&gap));

    let test = draw(50_000, 2);
    let b = 20;
    let pi = pi_single(&model, &test, 0, b, &Shuffles::Random(Stream::new(3))).unwrap();
    let pi_mean = pi.values.mean().unwrap();
    let t = Instant::now();
    let sampler = fit_conditional(test.x(), 0, &SamplerConfig::default(), Stream::new(4)).unwrap();
    let cpi = cpi_single(&model, &test, &sampler, b, &Shuffles::Random(Stream::new(5))).unwrap();
    let cpi_mean = cpi.values.mean().unwrap();
    let rel = (pi_mean - limit).abs() / limit.abs();
    let ok = rel <= 0.1 && cpi_mean.abs() <= 0.1 * limit.abs();
    verdict(
        4,
        ok,
        format!(
            "w_hat={w_hat:.3}, limit {limit:.4}; PI {pi_mean:.4} (rel err {rel:.4} <= 0.1); CPI {cpi_mean:.5} (|.| <= {:.4}); sampler {:.0}s",
            0.1 * limit.abs(),
            t.elapsed().as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn acceptance_5_pinned_brute_force() {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for task in [Task::Regression, Task::Binary] {
        let weights = array![0.8, -1.3];
        let model = LinearModel::new(weights.clone(), 0.2, task);
        let x = array![[0.3, -1.0], [1.7, 0.4], [-0.9, 2.1]];
        let y = match task {
            Task::Regression => array![0.5, 1.9, -2.2],
            Task::Binary => array![1.0, 0.0, 1.0],
        };
        let eval = Dataset::new(x.clone(), y.clone(), task).unwrap();
        let xhat = array![0.1, 1.2, -0.4];
        let sampler = ConditionalSampler::from_parts(0, x.column(0).to_owned(), xhat.clone()).unwrap();
        let perms = vec![vec![2, 0, 1], vec![1, 2, 0]];
        let m = cpi_single(&model, &eval, &sampler, 2, &Shuffles::Pinned(perms.clone())).unwrap();
        let summary = summarize_losses(m.values.view(), WaldMode::StandardError);

        // enumerate every (sample, draw) loss by hand
        let f = |a: f64, c: f64| 0.8 * a - 1.3 * c + 0.2;
        let loss = |yi: f64, pred: f64| match task {
            Task::Regression => (yi - pred).powi(2),
            Task::Binary => {
                let p = 1.0 / (1.0 + (-pred).exp());
                -(yi * p.ln() + (1.0 - yi) * (1.0 - p).ln())
            }
        };
        let mut per_sample = [0.0; 3];
        for i in 0..3 {
            for perm in &perms {
                let xt = xhat[i] + (x[[perm[i], 0]] - xhat[perm[i]]);
                let l = loss(y[i], f(xt, x[[i, 1]])) - loss(y[i], f(x[[i, 0]], x[[i, 1]]));
                per_sample[i] += l / 2.0;
            }
        }
        let mean = per_sample.iter().sum::<f64>() / 3.0;
        let sd = (per_sample.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
        let z = mean / (sd / 3f64.sqrt());
        let p = normal_sf(z);
        worst = worst
            .max((summary.mean - mean).abs())
            .max((summary.sd - sd).abs())
            .max((summary.wald.z - z).abs())
            .max((summary.wald.pvalue - p).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    let ok = worst <= 1e-12 && secs < 1.0;
    verdict(5, ok, format!("max abs diff {worst:.2e} (<= 1e-12), {secs:.4}s (< 1s)"));
    assert!(ok);
}

#[test]
fn acceptance_6_mlp_gradient_check() {
    let mut worst = 0.0f64;
    let mut rng = Stream::new(6).rng();
    for probe in 0..100u64 {
        let task = if probe % 2 == 0 { Task::Regression } else { Task::Binary };
        let mut net = Mlp::init(5, &[8, 4], task, Stream::new(probe)).unwrap();
        let theta: Vec<f64> = (0..net.n_params()).map(|_| 0.7 * gaussian(&mut rng)).collect();
        net.set_flat_params(&theta);
        let x = Array2::from_shape_simple_fn((9, 5), || gaussian(&mut rng));
        let y = match task {
            Task::Regression => Array1::from_shape_simple_fn(9, || gaussian(&mut rng)),
            Task::Binary => Array1::from_shape_simple_fn(9, || f64::from(u8::from(rng.random_bool(0.5)))),
        };
        let (l1, l2) = (1e-3, 1e-2);
        let analytic = flatten(&net.objective_and_gradient(x.view(), y.view(), l1, l2).1);
        let k = rng.random_range(0..theta.len());
        let h = 1e-5;
        let mut t = theta.clone();
        t[k] += h;
        net.set_flat_params(&t);
        let up = net.objective_and_gradient(x.view(), y.view(), l1, l2).0;
        t[k] -= 2.0 * h;
        net.set_flat_params(&t);
        let down = net.objective_and_gradient(x.view(), y.view(), l1, l2).0;
        let fd = (up - down) / (2.0 * h);
        let rel = (analytic[k] - fd).abs() / analytic[k].abs().max(fd.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    let ok = worst < 1e-4;
    verdict(6, ok, format!("max relative error over 100 probes {worst:.2e} (< 1e-4)"));
    assert!(ok);
}

#[test]
fn acceptance_7_sampler_depth_calibration() {
    let records = exp1_records();
    let (cv, trials) = pooled_type1(&select(records, 0.8, "cpi-mlp", 20), 0.05);
    let (d1, _) = pooled_type1(&select(records, 0.8, "cpi-mlp-d1", 20), 0.05);
    let ok = d1 > cv;
    verdict(7, ok, format!("type-I over {trials} null tests: depth 1 {d1:.4} vs cv depth {cv:.4} (strictly higher)"));
    assert!(ok);
}

fn report_bytes(cfg: &BenchConfig, dir: &Path) -> Vec<u8> {
    let records = run_bench(cfg, dir, false).unwrap();
    cpi_core::bench::emit_report(&aggregate(&records, cfg.alpha), dir).unwrap();
    std::fs::read(dir.join("report.csv")).unwrap()
}

#[test]
fn acceptance_8_byte_identical_reports() {
    let mut cfg = BenchConfig::new(
        vec![
            ScenarioEntry::new(ScenarioSpec::new(Scenario::Exp1, 200, 50, 0.5)),
            ScenarioEntry::new(ScenarioSpec::new(Scenario::Classification, 200, 20, 0.5)),
        ],
        vec![
            MethodEntry::new(Method::Cpi, LearnerSpec::default()),
            MethodEntry::new(Method::Pi, LearnerSpec::forest()),
            MethodEntry::new(Method::Loco, LearnerSpec::default()),
            MethodEntry::new(Method::Marginal, LearnerSpec::default()),
        ],
    );
    cfg.runs = 2;
    cfg.b = 10;
    cfg.workers = 2;
    cfg.seed = 99;
    let (a, b) = (scratch("acc-det-a"), scratch("acc-det-b"));
    let first = report_bytes(&cfg, a.path());
    let second = report_bytes(&cfg, b.path());
    let rows = String::from_utf8_lossy(&first).lines().count();
    let ok = first == second && rows > 1;
    verdict(8, ok, format!("{} bytes, {rows} lines, identical: {}", first.len(), first == second));
    assert!(ok);
}
