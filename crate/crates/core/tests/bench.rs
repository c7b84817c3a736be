//! Orchestration: resuming, failure isolation, record layout and aggregation.

use cpi_core::bench::{aggregate, load_records, run_bench, BenchConfig, MethodEntry, RunRecord, RunStatus, ScenarioEntry};
use cpi_core::inference::Method;
use cpi_core::learners::{ForestConfig, LearnerSpec, MlpConfig, Optimizer};
use cpi_core::{Scenario, ScenarioSpec};

fn tiny_forest() -> LearnerSpec {
    LearnerSpec::Forest { config: ForestConfig { n_trees: 10, ..Default::default() } }
}

fn config(runs: usize) -> BenchConfig {
    let scenario = ScenarioEntry::new(ScenarioSpec::new(Scenario::Exp1, 100, 50, 0.5));
    let methods = vec![MethodEntry::new(Method::Pi, tiny_forest()), MethodEntry::new(Method::Marginal, tiny_forest())];
    let mut cfg = BenchConfig::new(vec![scenario], methods);
    cfg.runs = runs;
    cfg.b = 3;
    cfg.seed = 17;
    cfg.workers = 1;
    cfg
}

// wall time differs between executions; everything else must not
fn strip_time(mut records: Vec<RunRecord>) -> Vec<RunRecord> {
    for r in &mut records {
        r.seconds = 0.0;
        if let Some(e) = r.eval.as_mut() {
            e.runtime_seconds = 0.0;
        }
    }
    records
}

#[test]
fn resumed_bench_matches_an_uninterrupted_one() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_bench(&config(1), a.path(), false).unwrap();
    let resumed = run_bench(&config(3), a.path(), true).unwrap();
    let fresh = run_bench(&config(3), b.path(), false).unwrap();
    assert_eq!(resumed.len(), 6);
    assert_eq!(strip_time(resumed), strip_time(fresh.clone()));
    assert_eq!(strip_time(load_records(&config(3), b.path())), strip_time(fresh));
}

#[test]
fn a_diverging_learner_fails_alone() {
    let exploding = LearnerSpec::Mlp {
        config: MlpConfig { learning_rate: 1e12, optimizer: Optimizer::Sgd, epochs: 20, ..Default::default() },
        tune: false,
    };
    let mut cfg = config(1);
    cfg.methods.push(MethodEntry::new(Method::Pi, exploding));
    let dir = tempfile::tempdir().unwrap();
    let records = run_bench(&cfg, dir.path(), false).unwrap();
    let by_learner = |label: &str| records.iter().find(|r| r.method_spec.learner.label() == label && r.method_spec.method == Method::Pi).unwrap();
    let failed = by_learner("mlp");
    assert_eq!(failed.status, RunStatus::Failed);
    assert!(failed.error.as_deref().is_some_and(|e| !e.is_empty()));
    assert!(failed.report.is_none() && failed.eval.is_none());
    assert!(records.iter().filter(|r| r.status == RunStatus::Ok).count() == 2);
    assert!(by_learner("rf").eval.is_some());

    let summary = aggregate(&records, cfg.alpha);
    let timing = summary.timing.iter().find(|t| t.method == failed.method).unwrap();
    assert_eq!(timing.n_failed, 1);
}

#[test]
fn marginal_record_carries_one_pvalue_per_column() {
    let scenario = ScenarioEntry::new(ScenarioSpec::new(Scenario::Exp1, 300, 100, 0.0));
    let mut cfg = BenchConfig::new(vec![scenario], vec![MethodEntry::new(Method::Marginal, tiny_forest())]);
    cfg.runs = 1;
    let dir = tempfile::tempdir().unwrap();
    let records = run_bench(&cfg, dir.path(), false).unwrap();
    assert_eq!(records.len(), 1);
    let eval = records[0].eval.as_ref().unwrap();
    assert_eq!(eval.pvalues.len(), 100);
    assert_eq!(records[0].report.as_ref().unwrap().variables.len(), 100);
    assert!(eval.pvalues.iter().all(|p| (0.0..=1.0).contains(p)));
}

#[test]
fn timing_totals_cover_the_slowest_run() {
    let dir = tempfile::tempdir().unwrap();
    let records = run_bench(&config(3), dir.path(), false).unwrap();
    let summary = aggregate(&records, 0.05);
    assert_eq!(summary.timing.len(), 2);
    for t in &summary.timing {
        assert_eq!(t.n_runs, 3);
        assert!(t.total_seconds >= t.max_seconds && t.max_seconds >= t.mean_seconds);
        assert!((t.mean_seconds * 3.0 - t.total_seconds).abs() <= 1e-9 * t.total_seconds.max(1.0));
    }
}
