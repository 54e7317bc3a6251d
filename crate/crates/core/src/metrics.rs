//! Regression metrics and per-day error reports, always in raw USD.
//!
//! MSE is the mean squared error, RMSE its square root, MAE the mean
//! absolute error, and MAPE the mean absolute percentage error
//! `100/N * sum |R - R^| / |R|`. Stored values keep full precision;
//! presentation rounds prices to one decimal and percentages to two.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub mape: f64,
    pub n: usize,
}

/// Compute all four metrics over paired true/predicted vectors. Every true
/// value must be nonzero because MAPE divides by it.
pub fn compute_metrics(truth: &[f64], pred: &[f64]) -> Result<MetricsReport> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::validation(format!(
            "metrics need equal nonzero lengths, got {} and {}",
            truth.len(),
            pred.len()
        )));
    }
    if let Some(i) = truth.iter().position(|&t| t == 0.0) {
        return Err(Error::domain(format!(
            "MAPE undefined: true value at index {i} is zero"
        )));
    }
    let n = truth.len() as f64;
    let mut mse = 0.0;
    let mut mae = 0.0;
    let mut mape = 0.0;
    for (&t, &p) in truth.iter().zip(pred) {
        let e = t - p;
        mse += e * e;
        mae += e.abs();
        mape += (e / t).abs();
    }
    Ok(MetricsReport {
        mse: mse / n,
        rmse: (mse / n).sqrt(),
        mae: mae / n,
        mape: 100.0 * mape / n,
        n: truth.len(),
    })
}

/// One row of a per-day error table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayError {
    pub day: NaiveDate,
    pub truth: f64,
    pub pred: f64,
    pub abs_err: f64,
    pub abs_pct_err: f64,
}

/// Per-day absolute and percentage errors; `abs = |true - pred|`,
/// `pct = 100 * abs / true`.
pub fn per_day_errors(dates: &[NaiveDate], truth: &[f64], pred: &[f64]) -> Result<Vec<DayError>> {
    if dates.len() != truth.len() || truth.len() != pred.len() {
        return Err(Error::validation(format!(
            "per-day errors need equal lengths, got {}/{}/{}",
            dates.len(),
            truth.len(),
            pred.len()
        )));
    }
    if let Some(i) = truth.iter().position(|&t| t == 0.0) {
        return Err(Error::domain(format!(
            "percentage error undefined: true value at index {i} is zero"
        )));
    }
    Ok(dates
        .iter()
        .zip(truth.iter().zip(pred))
        .map(|(&day, (&t, &p))| DayError {
            day,
            truth: t,
            pred: p,
            abs_err: (t - p).abs(),
            abs_pct_err: 100.0 * ((t - p) / t).abs(),
        })
        .collect())
}

pub const DAY_ERROR_COLUMNS: [&str; 5] = ["day", "true", "pred", "abs_err", "abs_pct_err"];

/// Write a per-day table as CSV with presentation rounding: USD to one
/// decimal, percentages to two.
pub fn write_day_errors_csv<W: std::io::Write>(rows: &[DayError], out: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(DAY_ERROR_COLUMNS)?;
    for r in rows {
        writer.write_record([
            r.day.to_string(),
            format!("{:.1}", r.truth),
            format!("{:.1}", r.pred),
            format!("{:.1}", r.abs_err),
            format!("{:.2}", r.abs_pct_err),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Full-precision JSON emission for a metrics report.
pub fn write_metrics_json<W: std::io::Write>(report: &MetricsReport, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, report)?;
    Ok(())
}
