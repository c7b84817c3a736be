//! Multi-run simulation experiments: configuration, execution with on-disk
//! records, aggregation and report emission.

mod config;
mod report;
mod run;

pub use config::{BenchConfig, MethodEntry, ScenarioEntry};
pub use report::{aggregate, emit_report, read_summary_csv, Summary, SummaryRow, TimingRow, METRICS};
pub use run::{load_records, record_path, run_bench, RunRecord, RunStatus, SeedTrail};
