//! JSON and CSV report files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::report::{canonical_json, MetricsReport};
use crate::tune::{AggregateRow, ExperimentResult, RunRecord};

use super::matrix::write_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Json,
    Csv,
    Both,
}

impl ReportFormat {
    pub fn json(self) -> bool {
        matches!(self, ReportFormat::Json | ReportFormat::Both)
    }

    pub fn csv(self) -> bool {
        matches!(self, ReportFormat::Csv | ReportFormat::Both)
    }
}

/// Canonical (sorted-key, pretty) JSON followed by a newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = canonical_json(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

pub const CSV_HEADER: &str =
    "row,method,seed,tuning_fraction,ablation_value,status,temperature,epsilon,lambda,n_effective,fpr95,fpr95_std,auroc,auroc_std,aurc,aurc_std,ece";

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn report_row(out: &mut String, seed: Option<u64>, fraction: Option<f64>, value: Option<f64>, status: &str, r: Option<&MetricsReport>, method: &str) {
    let cfg = r.map(|r| &r.config);
    let m = r.map(|r| &r.metrics);
    let _ = writeln!(
        out,
        "seed,{method},{},{},{},{status},{},{},{},{},{},,{},,{},,{}",
        seed.map_or(String::new(), |s| s.to_string()),
        opt(fraction),
        opt(value),
        opt(cfg.map(|c| c.temperature)),
        opt(cfg.map(|c| c.epsilon)),
        opt(cfg.and_then(|c| c.lambda)),
        if r.is_some() { "1" } else { "0" },
        opt(m.map(|m| m.fpr95())),
        opt(m.map(|m| m.auroc)),
        opt(m.map(|m| m.aurc)),
        opt(m.and_then(|m| m.ece)),
    );
}

fn record_row(out: &mut String, r: &RunRecord) {
    let status = match r.status {
        crate::tune::RunStatus::Ok => "ok",
        crate::tune::RunStatus::Failed => "failed",
    };
    report_row(out, Some(r.seed), Some(r.tuning_fraction), r.ablation_value, status, r.report.as_ref(), r.method.tag());
}

fn aggregate_row(out: &mut String, a: &AggregateRow) {
    let _ = writeln!(
        out,
        "aggregate,{},,{},{},{},,,,{},{},{},{},{},{},{},",
        a.method.tag(),
        a.tuning_fraction,
        opt(a.ablation_value),
        if a.n_effective == a.n_seeds { "ok" } else { "partial" },
        a.n_effective,
        opt(a.fpr95_mean),
        opt(a.fpr95_std),
        opt(a.auroc_mean),
        opt(a.auroc_std),
        opt(a.aurc_mean),
        opt(a.aurc_std),
    );
}

/// One row per record, then one aggregate row per method and setting.
pub fn experiment_csv(result: &ExperimentResult) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for r in &result.records {
        record_row(&mut out, r);
    }
    for a in &result.aggregates {
        aggregate_row(&mut out, a);
    }
    out
}

pub fn report_csv(report: &MetricsReport) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    let fraction = report.split.tuning_fraction;
    report_row(&mut out, report.seed, fraction, None, "ok", Some(report), report.method.tag());
    out
}

fn emit(dir: &Path, stem: &str, format: ReportFormat, json: impl FnOnce(&Path) -> Result<()>, csv: impl FnOnce() -> String) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if format.json() {
        let p = dir.join(format!("{stem}.json"));
        json(&p)?;
        written.push(p);
    }
    if format.csv() {
        let p = dir.join(format!("{stem}.csv"));
        write_text(&p, &csv())?;
        written.push(p);
    }
    Ok(written)
}

/// Writes `<stem>.json` and/or `<stem>.csv` into `dir`.
pub fn emit_report(report: &MetricsReport, dir: &Path, stem: &str, format: ReportFormat) -> Result<Vec<PathBuf>> {
    emit(dir, stem, format, |p| write_json(p, report), || report_csv(report))
}

pub fn emit_experiment(result: &ExperimentResult, dir: &Path, stem: &str, format: ReportFormat) -> Result<Vec<PathBuf>> {
    emit(dir, stem, format, |p| write_json(p, result), || experiment_csv(result))
}
