use std::fmt::Write as _;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::record::RunRecord;
use crate::dynamics::Input;
use crate::error::{Error, Result};

/// Normalized tracking and move metrics of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    /// Mean squared 2-norm of the tracking error, cm².
    pub nise: f64,
    /// Mean 1-norm of the tracking error, cm.
    pub niae: f64,
    /// Mean squared input move, (cm³/s)²; absent with fewer than two inputs.
    pub nisdu: Option<f64>,
    pub n: usize,
    pub m: usize,
}

pub fn metrics_from(errors: &[Vector2<f64>], inputs: &[Input]) -> Result<PerformanceReport> {
    if errors.is_empty() {
        return Err(Error::InvalidArgument("no samples to evaluate".into()));
    }
    let n = errors.len();
    let nise = errors.iter().map(|e| e.norm_squared()).sum::<f64>() / n as f64;
    let niae = errors.iter().map(|e| e.lp_norm(1)).sum::<f64>() / n as f64;
    let m = inputs.len();
    let nisdu = (m >= 2).then(|| {
        inputs
            .windows(2)
            .map(|w| (w[1] - w[0]).norm_squared())
            .sum::<f64>()
            / (m - 1) as f64
    });
    Ok(PerformanceReport {
        nise,
        niae,
        nisdu,
        n,
        m,
    })
}

pub fn compute_metrics(record: &RunRecord) -> Result<PerformanceReport> {
    metrics_from(&record.errors(), &record.inputs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub controller: String,
    pub report: PerformanceReport,
}

/// One metrics row per record, in the given order.
pub fn compare(records: &[RunRecord]) -> Result<Vec<ComparisonRow>> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("nothing to compare".into()));
    }
    records
        .iter()
        .map(|r| {
            Ok(ComparisonRow {
                controller: r.meta.controller.clone(),
                report: compute_metrics(r)?,
            })
        })
        .collect()
}

fn fmt3(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_owned(), |v| format!("{v:.3}"))
}

pub fn render_text(rows: &[ComparisonRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>12} {:>12} {:>12}",
        "Control", "NISE", "NIAE", "NISΔU"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<10} {:>12} {:>12} {:>12}",
            r.controller.to_uppercase(),
            fmt3(Some(r.report.nise)),
            fmt3(Some(r.report.niae)),
            fmt3(r.report.nisdu)
        );
    }
    out
}

pub fn render_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("control,nise,niae,nisdu\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.controller,
            fmt3(Some(r.report.nise)),
            fmt3(Some(r.report.niae)),
            fmt3(r.report.nisdu)
        );
    }
    out
}
