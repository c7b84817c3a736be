use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::config::{BenchConfig, MethodEntry};
use crate::condsampler::SamplerConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::inference::{
    cpi_with_samplers, fit_fold_samplers, loco_importance, marginal_importance, pi_importance, summarize_losses,
    ImportanceReport, Method, VariableImportance,
};
use crate::learners::{make_crossfit, Crossfit, LearnerSpec};
use crate::metrics::EvalResult;
use crate::rng::Stream;
use crate::simgen::ScenarioSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Seeds needed to replay one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedTrail {
    pub bench_seed: u64,
    pub run_stream: u64,
    pub data_seed: u64,
}

/// Outcome of one method on one simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub scenario: String,
    pub method: String,
    pub spec: ScenarioSpec,
    pub method_spec: MethodEntry,
    pub status: RunStatus,
    #[serde(default)]
    pub error: Option<String>,
    #[serde(default)]
    pub report: Option<ImportanceReport>,
    #[serde(default)]
    pub eval: Option<EvalResult>,
    /// Wall time of the method including its share of learner fitting.
    pub seconds: f64,
    pub seeds: SeedTrail,
}

fn sanitize(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' }).collect()
}

pub fn record_path(out: &Path, scenario: &str, method: &str, run: usize) -> PathBuf {
    out.join("records").join(sanitize(scenario)).join(sanitize(method)).join(format!("run-{run:04}.json"))
}

fn read_record(path: &Path) -> Option<RunRecord> {
    let text = fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Every record of `config` found under `out`, in config order (scenario,
/// method, run). Missing or unreadable records are skipped.
pub fn load_records(config: &BenchConfig, out: &Path) -> Vec<RunRecord> {
    let mut records = Vec::new();
    for s in &config.scenarios {
        for m in &config.methods {
            for run in 0..config.runs {
                if let Some(r) = read_record(&record_path(out, &s.label(), &m.label(), run)) {
                    records.push(r);
                }
            }
        }
    }
    records
}

/// Runs every (scenario, run) pair and writes one JSON record per method
/// plus a line in `index.jsonl`. With `resume`, pairs whose records all
/// exist are read back instead of recomputed.
pub fn run_bench(config: &BenchConfig, out: &Path, resume: bool) -> Result<Vec<RunRecord>> {
    config.validate()?;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), serde_json::to_string_pretty(config)?)?;
    let index_path = out.join("index.jsonl");
    let index = Mutex::new(if resume {
        OpenOptions::new().create(true).append(true).open(&index_path)?
    } else {
        File::create(&index_path)?
    });

    let tasks: Vec<(usize, usize)> =
        (0..config.scenarios.len()).flat_map(|s| (0..config.runs).map(move |r| (s, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;

    let done: Vec<Vec<RunRecord>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, run)| -> Result<Vec<RunRecord>> {
                let scenario = &config.scenarios[s];
                let paths: Vec<PathBuf> =
                    config.methods.iter().map(|m| record_path(out, &scenario.label(), &m.label(), run)).collect();
                if resume {
                    let existing: Vec<RunRecord> = paths.iter().filter_map(|p| read_record(p)).collect();
                    if existing.len() == paths.len() {
                        return Ok(existing);
                    }
                }
                let records = run_task(config, s, run);
                for (record, path) in records.iter().zip(&paths) {
                    write_atomic(path, serde_json::to_string_pretty(record)?.as_bytes())?;
                    let line = serde_json::json!({
                        "scenario": record.scenario,
                        "method": record.method,
                        "run": record.run,
                        "status": record.status,
                        "file": path.strip_prefix(out).unwrap_or(path),
                    });
                    let mut f = index.lock().expect("index lock");
                    f.write_all(format!("{line}\n").as_bytes())?;
                    f.flush()?;
                }
                Ok(records)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    // restore config order: scenario, method, run
    let n_methods = config.methods.len();
    let mut records: Vec<RunRecord> = Vec::with_capacity(tasks.len() * n_methods);
    for s in 0..config.scenarios.len() {
        for m in 0..n_methods {
            for run in 0..config.runs {
                records.push(done[s * config.runs + run][m].clone());
            }
        }
    }
    Ok(records)
}

struct Outcome {
    result: std::result::Result<ImportanceReport, String>,
    seconds: f64,
}

/// All methods on one simulated dataset. Methods sharing a learner share its
/// cross-fitted models; CPI methods with the same sampler depth share the
/// conditional forests.
fn run_task(config: &BenchConfig, s: usize, run: usize) -> Vec<RunRecord> {
    let entry = &config.scenarios[s];
    let stream = Stream::new(config.seed).tagged(&entry.label()).child(run as u64);
    let data_seed = stream.tagged("data").key();
    let spec = entry.spec.clone().with_seed(data_seed);
    let seeds = SeedTrail { bench_seed: config.seed, run_stream: stream.key(), data_seed };

    let t0 = Instant::now();
    let sim = spec.simulate();
    let sim_seconds = t0.elapsed().as_secs_f64();
    let outcomes: Vec<Outcome> = match &sim {
        Ok(sim) => run_methods(config, &sim.data, stream, sim_seconds),
        Err(e) => config.methods.iter().map(|_| Outcome { result: Err(e.to_string()), seconds: sim_seconds }).collect(),
    };

    config
        .methods
        .iter()
        .zip(outcomes)
        .map(|(m, o)| {
            let mut record = RunRecord {
                run,
                scenario: entry.label(),
                method: m.label(),
                spec: spec.clone(),
                method_spec: m.clone(),
                status: RunStatus::Failed,
                error: None,
                report: None,
                eval: None,
                seconds: o.seconds,
                seeds: seeds.clone(),
            };
            let evaluated = o.result.and_then(|report| {
                let truth = &sim.as_ref().expect("reports imply data").truth;
                EvalResult::evaluate(&report.pvalues(), &truth.support, config.alpha, o.seconds)
                    .map(|eval| (report, eval))
                    .map_err(|e| e.to_string())
            });
            match evaluated {
                Ok((report, eval)) => {
                    record.status = RunStatus::Ok;
                    record.report = Some(report);
                    record.eval = Some(eval);
                }
                Err(e) => record.error = Some(e),
            }
            record
        })
        .collect()
}

fn run_methods(config: &BenchConfig, data: &Dataset, stream: Stream, base_seconds: f64) -> Vec<Outcome> {
    let importance_stream = stream.tagged("importance");

    // one cross-fit per distinct learner, all on the same fold split
    let mut learners: Vec<(LearnerSpec, std::result::Result<Crossfit, String>, f64)> = Vec::new();
    for m in config.methods.iter().filter(|m| m.uses_learner()) {
        if learners.iter().any(|(l, _, _)| *l == m.learner) {
            continue;
        }
        let t = Instant::now();
        let cf = make_crossfit(data, &m.learner, stream.tagged("crossfit")).map_err(|e| e.to_string());
        learners.push((m.learner.clone(), cf, t.elapsed().as_secs_f64()));
    }
    let learner_of = |m: &MethodEntry| learners.iter().find(|(l, _, _)| *l == m.learner).expect("fitted above");

    let mut outcomes: Vec<Option<Outcome>> = config.methods.iter().map(|_| None).collect();
    for (k, m) in config.methods.iter().enumerate() {
        let t = Instant::now();
        let result = match m.method {
            Method::Marginal => marginal_importance(data).map_err(|e| e.to_string()),
            Method::Pi => learner_of(m).1.as_ref().map_err(Clone::clone).and_then(|cf| {
                pi_importance(data, cf, config.b, config.wald, importance_stream).map_err(|e| e.to_string())
            }),
            Method::Loco => learner_of(m).1.as_ref().map_err(Clone::clone).and_then(|cf| {
                loco_importance(data, cf, config.wald, importance_stream).map_err(|e| e.to_string())
            }),
            Method::Cpi => continue,
        };
        let fit = if m.uses_learner() { learner_of(m).2 } else { 0.0 };
        outcomes[k] = Some(Outcome { result, seconds: base_seconds + fit + t.elapsed().as_secs_f64() });
    }

    // CPI methods grouped by sampler depth
    let cpi: Vec<usize> = (0..config.methods.len()).filter(|&k| config.methods[k].method == Method::Cpi).collect();
    let mut groups: Vec<(Option<usize>, Vec<usize>)> = Vec::new();
    for &k in &cpi {
        let depth = config.methods[k].sampler_depth;
        match groups.iter_mut().find(|(d, _)| *d == depth) {
            Some((_, members)) => members.push(k),
            None => groups.push((depth, vec![k])),
        }
    }
    for (depth, members) in groups {
        let sampler_cfg = config.methods[members[0]].sampler(&config.sampler);
        let fitted: Vec<(usize, &Crossfit)> = members
            .iter()
            .filter_map(|&k| learner_of(&config.methods[k]).1.as_ref().ok().map(|cf| (k, cf)))
            .collect();
        for &k in &members {
            if let Err(e) = &learner_of(&config.methods[k]).1 {
                outcomes[k] = Some(Outcome { result: Err(e.clone()), seconds: base_seconds + learner_of(&config.methods[k]).2 });
            }
        }
        if fitted.is_empty() {
            continue;
        }
        let t = Instant::now();
        let sampler_stream = stream.tagged("sampler").tagged(&depth.map_or("cv".to_string(), |d| format!("d{d}")));
        let reports = cpi_group(config, data, &sampler_cfg, &fitted, sampler_stream, importance_stream);
        let group_seconds = t.elapsed().as_secs_f64();
        for ((k, _), result) in fitted.iter().zip(reports) {
            let fit = learner_of(&config.methods[*k]).2;
            outcomes[*k] = Some(Outcome { result, seconds: base_seconds + fit + group_seconds });
        }
    }
    outcomes.into_iter().map(|o| o.expect("every method handled")).collect()
}

/// CPI reports for several (method, cross-fit) pairs sharing one sampler
/// configuration.
fn cpi_group(
    config: &BenchConfig,
    data: &Dataset,
    sampler_cfg: &SamplerConfig,
    fitted: &[(usize, &Crossfit)],
    sampler_stream: Stream,
    draw_stream: Stream,
) -> Vec<std::result::Result<ImportanceReport, String>> {
    let shared_split = fitted.iter().all(|(_, cf)| cf.assignment == fitted[0].1.assignment);
    let per_variable: Vec<Vec<std::result::Result<VariableImportance, String>>> = (0..data.p())
        .into_par_iter()
        .map(|j| {
            let shared = if shared_split { Some(fit_fold_samplers(data, fitted[0].1, j, sampler_cfg, sampler_stream)) } else { None };
            fitted
                .iter()
                .map(|(k, cf)| -> Result<VariableImportance> {
                    let samplers = match &shared {
                        Some(Ok(s)) => s.clone(),
                        Some(Err(e)) => return Err(Error::InvalidArgument(e.to_string())),
                        None => fit_fold_samplers(data, cf, j, sampler_cfg, sampler_stream)?,
                    };
                    let samplers = samplers.map(|mut s| {
                        s.construction = config.methods[*k].construction;
                        s
                    });
                    let m = cpi_with_samplers(data, cf, &samplers, config.b, draw_stream)?;
                    Ok(VariableImportance::from_summary(j, &summarize_losses(m.values.view(), config.wald)))
                })
                .map(|r| r.map_err(|e| e.to_string()))
                .collect()
        })
        .collect();
    (0..fitted.len())
        .map(|f| {
            let vars = per_variable.iter().map(|v| v[f].clone()).collect::<std::result::Result<Vec<_>, String>>()?;
            Ok(ImportanceReport::new(Method::Cpi, vars))
        })
        .collect()
}
