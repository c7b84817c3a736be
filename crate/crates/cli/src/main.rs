//! `cpi` command line: simulate data, score variable importance, run benches.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use cpi_core::bench::{aggregate, emit_report, load_records, run_bench, BenchConfig, Summary};
use cpi_core::condsampler::SamplerFitSet;
use cpi_core::inference::{cpi_importance, loco_importance, marginal_importance, pi_importance, ImportanceReport};
use cpi_core::learners::make_crossfit;
use cpi_core::{Construction, CpiConfig, Dataset, LearnerSpec, Method, Scenario, ScenarioSpec, Stream, Task, WaldMode};
use ndarray::{Array1, Array2};
use serde_json::json;

#[derive(Parser)]
#[command(name = "cpi", version, about = "Conditional permutation importance with Wald p-values")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic dataset and write it as CSV plus a ground-truth sidecar.
    Simulate(SimulateArgs),
    /// Per-variable importance and p-values for a CSV dataset.
    Importance(ImportanceArgs),
    /// Run a multi-run benchmark from a JSON config and write its report.
    Bench(BenchArgs),
    /// Rebuild the report of an existing bench directory from its records.
    Report(ReportArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// exp1, classification, plain_linear, relu_linear, interactions_only, main_plus_interactions or null
    #[arg(long)]
    scenario: Scenario,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 0.0)]
    rho: f64,
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long)]
    n_signal: Option<usize>,
    #[arg(long)]
    n_blocks: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV path; the sidecar goes next to it with a `.json` extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Reg,
    Bin,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Cpi,
    Pi,
    Loco,
    Marginal,
}

#[derive(Clone, Copy, ValueEnum)]
enum LearnerArg {
    Mlp,
    Rf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConstructionArg {
    Additive,
    Leaf,
}

#[derive(Args)]
struct ImportanceArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    target: String,
    #[arg(long, value_enum, default_value_t = TaskArg::Reg)]
    task: TaskArg,
    #[arg(long, value_enum, default_value_t = MethodArg::Cpi)]
    method: MethodArg,
    #[arg(long, value_enum, default_value_t = LearnerArg::Mlp)]
    learner: LearnerArg,
    /// Perturbed copies per variable.
    #[arg(long = "B", default_value_t = cpi_core::inference::DEFAULT_B)]
    b: usize,
    #[arg(long, value_enum, default_value_t = ConstructionArg::Additive)]
    construction: ConstructionArg,
    /// Fixed depth for the conditional forests instead of cross-validating it.
    #[arg(long)]
    sampler_depth: Option<usize>,
    /// Fit the conditional forests on the training fold instead of the held-out fold.
    #[arg(long)]
    sampler_fit_on_train: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output JSON; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Divide the mean loss by its standard deviation without the √n factor.
    #[arg(long)]
    z_literal: bool,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the config's run count, e.g. 100 for full-length studies.
    #[arg(long)]
    runs: Option<usize>,
    /// Skip runs whose records already exist in the output directory.
    #[arg(long)]
    resume: bool,
    /// Overrides the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory written by `cpi bench`.
    #[arg(long)]
    dir: PathBuf,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate(a) => simulate(a),
        Command::Importance(a) => importance(a),
        Command::Bench(a) => bench(a),
        Command::Report(a) => report(a),
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let mut spec = ScenarioSpec::new(a.scenario, a.n, a.p, a.rho).with_seed(a.seed);
    if let Some(snr) = a.snr {
        spec.snr = snr;
    }
    if let Some(k) = a.n_signal {
        spec.n_signal = k;
    }
    if let Some(b) = a.n_blocks {
        spec.n_blocks = b;
    }
    let sim = spec.simulate()?;
    let mut w = csv::Writer::from_path(&a.out).with_context(|| format!("cannot write {}", a.out.display()))?;
    let mut header: Vec<String> = (1..=spec.p).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    for (row, y) in sim.data.x.rows().into_iter().zip(sim.data.y.iter()) {
        // `{}` on f64 prints the shortest string that round-trips
        w.write_record(row.iter().chain(std::iter::once(y)).map(|v| v.to_string()))?;
    }
    w.flush()?;
    let mut sidecar = sim.truth.to_json();
    sidecar["spec"] = serde_json::to_value(&spec)?;
    let side = a.out.with_extension("json");
    fs::write(&side, serde_json::to_string_pretty(&sidecar)?)?;
    eprintln!("wrote {} and {}", a.out.display(), side.display());
    Ok(())
}

/// Reads a numeric CSV; every column other than `target` is a feature.
fn read_dataset(path: &Path, target: &str, task: Task) -> Result<(Dataset, Vec<String>)> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let Some(ti) = header.iter().position(|h| h == target) else {
        bail!("target column `{target}` not in header {header:?}");
    };
    let names: Vec<String> = header.iter().enumerate().filter(|&(i, _)| i != ti).map(|(_, h)| h.clone()).collect();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        for (i, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().with_context(|| format!("row {}: `{field}` is not a number", line + 2))?;
            if i == ti {
                ys.push(v);
            } else {
                xs.push(v);
            }
        }
    }
    let n = ys.len();
    let x = Array2::from_shape_vec((n, names.len()), xs)?;
    Ok((Dataset::new(x, Array1::from(ys), task)?, names))
}

fn importance(a: ImportanceArgs) -> Result<()> {
    let task = match a.task {
        TaskArg::Reg => Task::Regression,
        TaskArg::Bin => Task::Binary,
    };
    let (data, names) = read_dataset(&a.data, &a.target, task)?;
    let method = match a.method {
        MethodArg::Cpi => Method::Cpi,
        MethodArg::Pi => Method::Pi,
        MethodArg::Loco => Method::Loco,
        MethodArg::Marginal => Method::Marginal,
    };
    let learner = match a.learner {
        LearnerArg::Mlp => LearnerSpec::default(),
        LearnerArg::Rf => LearnerSpec::forest(),
    };
    let construction = match a.construction {
        ConstructionArg::Additive => Construction::Additive,
        ConstructionArg::Leaf => Construction::LeafSampling,
    };
    let wald = if a.z_literal { WaldMode::Literal } else { WaldMode::StandardError };
    let mut cfg = CpiConfig { b: a.b, wald, ..Default::default() };
    cfg.sampler.construction = construction;
    if a.sampler_depth.is_some() {
        cfg.sampler = cfg.sampler.with_depth(a.sampler_depth);
    }
    if a.sampler_fit_on_train {
        cfg.sampler.fit_set = SamplerFitSet::Training;
    }

    let start = Instant::now();
    let stream = Stream::new(a.seed);
    let report: ImportanceReport = if method == Method::Marginal {
        marginal_importance(&data)?
    } else {
        let cf = make_crossfit(&data, &learner, stream.tagged("crossfit"))?;
        let s = stream.tagged("importance");
        match method {
            Method::Cpi => cpi_importance(&data, &cf, &cfg, s)?,
            Method::Pi => pi_importance(&data, &cf, a.b, wald, s)?,
            _ => loco_importance(&data, &cf, wald, s)?,
        }
    };
    let report = report.with_names(&names);
    let out = json!({
        "method": method,
        "variables": report.variables,
        "metadata": {
            "data": a.data,
            "target": a.target,
            "task": task,
            "n": data.n(),
            "p": data.p(),
            "learner": if method == Method::Marginal { None } else { Some(learner.label()) },
            "B": a.b,
            "construction": construction,
            "sampler_depth": a.sampler_depth,
            "sampler_fit_set": cfg.sampler.fit_set,
            "wald": wald,
            "seed": a.seed,
            "wall_seconds": start.elapsed().as_secs_f64(),
        },
    });
    let text = serde_json::to_string_pretty(&out)?;
    match a.out {
        Some(path) => fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?,
        None => writeln!(std::io::stdout().lock(), "{text}")?,
    }
    Ok(())
}

fn print_summary(summary: &Summary) {
    println!("{:<40} {:<22} {:<12} {:>8} {:>8} {:>6}", "scenario", "method", "metric", "mean", "se", "runs");
    for r in &summary.rows {
        let se = r.se.map(|s| format!("{s:.4}")).unwrap_or_default();
        println!("{:<40} {:<22} {:<12} {:>8.4} {:>8} {:>6}", r.scenario, r.method, r.metric, r.mean, se, r.n_runs);
    }
}

fn bench(a: BenchArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("cannot read {}", a.config.display()))?;
    let mut cfg = BenchConfig::from_json(&text)?;
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    if let Some(r) = a.runs {
        cfg.runs = r;
    }
    let Some(out) = a.out.or_else(|| cfg.out.clone()) else {
        bail!("no output directory: pass --out or set \"out\" in the config");
    };
    cfg.out = Some(out.clone());
    cfg.validate()?;
    let records = run_bench(&cfg, &out, a.resume)?;
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        eprintln!("{failed} of {} runs failed; see their records", records.len());
    }
    let summary = aggregate(&records, cfg.alpha);
    emit_report(&summary, &out)?;
    print_summary(&summary);
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let path = a.dir.join("config.json");
    let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let cfg = BenchConfig::from_json(&text)?;
    let records = load_records(&cfg, &a.dir);
    if records.is_empty() {
        bail!("no run records under {}", a.dir.display());
    }
    let summary = aggregate(&records, cfg.alpha);
    emit_report(&summary, &a.dir)?;
    print_summary(&summary);
    Ok(())
}
