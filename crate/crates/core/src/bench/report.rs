use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::run::{RunRecord, RunStatus};
use crate::error::{Error, Result};
use crate::metrics::EvalResult;

/// Metric rows emitted per (scenario, method), in this order.
pub const METRICS: [&str; 3] = ["auc", "type1_error", "power"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub method: String,
    pub metric: String,
    pub mean: f64,
    /// Standard error of the mean; blank with fewer than two runs.
    pub se: Option<f64>,
    pub n_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub scenario: String,
    pub method: String,
    pub mean_seconds: f64,
    pub total_seconds: f64,
    pub max_seconds: f64,
    pub n_runs: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    /// Wall-clock accounting, kept apart from `rows` so the metric table is
    /// reproducible byte for byte.
    pub timing: Vec<TimingRow>,
    /// Reference levels for the plots.
    pub alpha: f64,
}

fn metric(e: &EvalResult, name: &str) -> Option<f64> {
    match name {
        "auc" => e.auc,
        "type1_error" => e.type1_error,
        "power" => e.power,
        _ => None,
    }
}

/// Mean and standard error of each metric per (scenario, method), groups in
/// order of first appearance. Failed runs count only towards timing.
pub fn aggregate(records: &[RunRecord], alpha: f64) -> Summary {
    let mut groups: Vec<((&str, &str), Vec<&RunRecord>)> = Vec::new();
    for r in records {
        let key = (r.scenario.as_str(), r.method.as_str());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => groups.push((key, vec![r])),
        }
    }
    let mut summary = Summary { alpha, ..Default::default() };
    for ((scenario, method), recs) in &groups {
        let ok: Vec<&EvalResult> = recs.iter().filter(|r| r.status == RunStatus::Ok).filter_map(|r| r.eval.as_ref()).collect();
        for name in METRICS {
            let values: Vec<f64> = ok.iter().filter_map(|e| metric(e, name)).collect();
            if values.is_empty() {
                continue;
            }
            let k = values.len() as f64;
            let mean = values.iter().sum::<f64>() / k;
            let se = (values.len() > 1).then(|| {
                let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
                (var / k).sqrt()
            });
            summary.rows.push(SummaryRow {
                scenario: scenario.to_string(),
                method: method.to_string(),
                metric: name.to_string(),
                mean,
                se,
                n_runs: values.len(),
            });
        }
        let secs: Vec<f64> = recs.iter().map(|r| r.seconds).collect();
        let total: f64 = secs.iter().sum();
        summary.timing.push(TimingRow {
            scenario: scenario.to_string(),
            method: method.to_string(),
            mean_seconds: total / secs.len() as f64,
            total_seconds: total,
            max_seconds: secs.iter().cloned().fold(0.0, f64::max),
            n_runs: recs.len(),
            n_failed: recs.iter().filter(|r| r.status == RunStatus::Failed).count(),
        });
    }
    summary
}

fn write_csv<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Writes `report.csv`, `report.json`, `timing.csv`, `type1_error.svg` and
/// `auc.svg` into `dir`; returns the paths written.
pub fn emit_report(summary: &Summary, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join("report.csv");
    write_csv(&csv_path, &["scenario", "method", "metric", "mean", "se", "n_runs"], &summary.rows)?;
    let timing_path = dir.join("timing.csv");
    write_csv(
        &timing_path,
        &["scenario", "method", "mean_seconds", "total_seconds", "max_seconds", "n_runs", "n_failed"],
        &summary.timing,
    )?;
    let json_path = dir.join("report.json");
    fs::write(&json_path, serde_json::to_string_pretty(summary)?)?;
    let t1 = dir.join("type1_error.svg");
    fs::write(&t1, bar_panels(summary, "type1_error", "Type-I error", summary.alpha))?;
    let auc = dir.join("auc.svg");
    fs::write(&auc, bar_panels(summary, "auc", "AUC", 0.5))?;
    Ok(vec![csv_path, json_path, timing_path, t1, auc])
}

const PANEL_W: f64 = 260.0;
const PANEL_H: f64 = 220.0;
const MARGIN: f64 = 40.0;

/// One panel per scenario, one bar per method with a ±1 SE whisker, and a
/// dashed horizontal line at `reference`.
fn bar_panels(summary: &Summary, metric: &str, title: &str, reference: f64) -> String {
    let mut scenarios: Vec<&str> = Vec::new();
    for r in &summary.rows {
        if !scenarios.contains(&r.scenario.as_str()) {
            scenarios.push(&r.scenario);
        }
    }
    let width = MARGIN + scenarios.len().max(1) as f64 * (PANEL_W + MARGIN);
    let height = PANEL_H + 3.0 * MARGIN;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(svg, r#"<text x="{}" y="16" font-size="13">{}</text>"#, MARGIN, escape(title));
    for (p, scenario) in scenarios.iter().enumerate() {
        let x0 = MARGIN + p as f64 * (PANEL_W + MARGIN);
        let y0 = 1.5 * MARGIN;
        let rows: Vec<&SummaryRow> = summary.rows.iter().filter(|r| r.scenario == *scenario && r.metric == metric).collect();
        let y_of = |v: f64| y0 + PANEL_H * (1.0 - v.clamp(0.0, 1.0));
        let _ = writeln!(svg, r#"<g class="panel">"#);
        let _ = writeln!(svg, r#"<rect x="{x0}" y="{y0}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#);
        let _ = writeln!(svg, r#"<text x="{x0}" y="{}">{}</text>"#, y0 - 6.0, escape(scenario));
        for tick in [0.0, 0.5, 1.0] {
            let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{tick}</text>"#, x0 - 4.0, y_of(tick) + 3.0);
        }
        let slot = PANEL_W / rows.len().max(1) as f64;
        for (i, r) in rows.iter().enumerate() {
            let bx = x0 + i as f64 * slot + slot * 0.15;
            let bw = slot * 0.7;
            let top = y_of(r.mean);
            let _ = writeln!(
                svg,
                r##"<rect x="{bx:.2}" y="{top:.2}" width="{bw:.2}" height="{:.2}" fill="#4c72b0"><title>{}: {}</title></rect>"##,
                y0 + PANEL_H - top,
                escape(&r.method),
                r.mean
            );
            if let Some(se) = r.se {
                let cx = bx + bw / 2.0;
                let _ = writeln!(
                    svg,
                    r#"<line x1="{cx:.2}" x2="{cx:.2}" y1="{:.2}" y2="{:.2}" stroke="black"/>"#,
                    y_of(r.mean - se),
                    y_of(r.mean + se)
                );
            }
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end" transform="rotate(-45 {:.2} {:.2})">{}</text>"#,
                bx + bw / 2.0,
                y0 + PANEL_H + 12.0,
                bx + bw / 2.0,
                y0 + PANEL_H + 12.0,
                escape(&r.method)
            );
        }
        let ry = y_of(reference);
        let _ = writeln!(
            svg,
            r#"<line x1="{x0}" x2="{}" y1="{ry:.2}" y2="{ry:.2}" stroke="red" stroke-dasharray="5,4"/>"#,
            x0 + PANEL_W
        );
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
