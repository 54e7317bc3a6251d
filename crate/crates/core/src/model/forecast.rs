//! Prediction and recursive multi-day forecasting.

use chrono::NaiveDate;

use crate::dataio::AlignedDataset;
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, DayError, MetricsReport};
use crate::ndcore::Matrix;
use crate::preprocess::{build_windows, zscore_apply, zscore_invert_scalar, StreamSel};
use crate::rnn::stream_forward;

use super::TrainedModel;

/// One-step prediction from raw feature windows. Both windows are
/// normalized with the model's stored statistics, run through their
/// streams, fused, and the result is denormalized back to USD.
pub fn predict_next(
    model: &TrainedModel,
    last_w_price: &Matrix,
    last_w_struct: &Matrix,
) -> Result<f64> {
    let w = model.window_len();
    for (window, cols) in [(last_w_price, 4), (last_w_struct, 5)] {
        if window.rows() != w || window.cols() != cols {
            return Err(Error::Shape {
                op: "predict_next",
                left_rows: window.rows(),
                left_cols: window.cols(),
                right_rows: w,
                right_cols: cols,
            });
        }
    }
    let price_window = zscore_apply(&model.price_norm, last_w_price)?;
    let struct_window = zscore_apply(&model.struct_norm, last_w_struct)?;
    let p1 = stream_forward(&model.price_stream, &price_window)?.0;
    let p2 = stream_forward(&model.struct_stream, &struct_window)?.0;
    let fused = model.fusion.predict(p1, p2)?;
    Ok(zscore_invert_scalar(&model.price_norm, 0, fused))
}

/// One forecasted day. `truth` and the error columns are present only where
/// the source data extends far enough to know the actual price.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastDay {
    pub date: NaiveDate,
    pub truth: Option<f64>,
    pub pred: f64,
    pub abs_err: Option<f64>,
    pub abs_pct_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    pub days: Vec<ForecastDay>,
}

impl ForecastResult {
    /// CSV in the per-day error table layout; unknown truths leave their
    /// cells empty. Prices round to one decimal, percentages to two.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("day,true,pred,abs_err,abs_pct_err\n");
        for d in &self.days {
            let truth = d.truth.map_or(String::new(), |t| format!("{t:.1}"));
            let abs = d.abs_err.map_or(String::new(), |e| format!("{e:.1}"));
            let pct = d.abs_pct_err.map_or(String::new(), |e| format!("{e:.2}"));
            out.push_str(&format!("{},{truth},{:.1},{abs},{pct}\n", d.date, d.pred));
        }
        out
    }

    /// Metrics over the days with known truth.
    pub fn metrics(&self) -> Result<MetricsReport> {
        let truth: Vec<f64> = self.days.iter().filter_map(|d| d.truth).collect();
        let pred: Vec<f64> = self
            .days
            .iter()
            .filter(|d| d.truth.is_some())
            .map(|d| d.pred)
            .collect();
        compute_metrics(&truth, &pred)
    }
}

/// Recursive multi-day forecast. The first `w` rows of `tail` seed the
/// window; after each predicted day a synthetic row is appended (all four
/// price features set to the prediction, structural features persisted from
/// the last observed row) and the window slides forward. Rows of `tail`
/// beyond the seed window provide the truth columns where present.
pub fn forecast_horizon(
    model: &TrainedModel,
    tail: &AlignedDataset,
    horizon: usize,
) -> Result<ForecastResult> {
    if horizon < 1 {
        return Err(Error::domain("forecast horizon must be at least 1".to_string()));
    }
    let w = model.window_len();
    if tail.rows() < w {
        return Err(Error::domain(format!(
            "forecast needs at least w = {w} rows of context, got {}",
            tail.rows()
        )));
    }

    let mut price_window: Vec<Vec<f64>> = (0..w).map(|i| tail.price.row(i).to_vec()).collect();
    let mut struct_window: Vec<Vec<f64>> =
        (0..w).map(|i| tail.structural.row(i).to_vec()).collect();
    let persisted_struct = tail.structural.row(w - 1).to_vec();
    let mut last_date = tail.dates[w - 1];

    let mut days = Vec::with_capacity(horizon);
    for step in 0..horizon {
        let pred = predict_next(
            model,
            &Matrix::from_rows(&price_window)?,
            &Matrix::from_rows(&struct_window)?,
        )?;
        let source_row = w + step;
        let (date, truth) = if source_row < tail.rows() {
            (tail.dates[source_row], Some(tail.avg_price(source_row)))
        } else {
            (
                last_date.succ_opt().ok_or_else(|| {
                    Error::domain("forecast date overflows the calendar".to_string())
                })?,
                None,
            )
        };
        last_date = date;
        days.push(ForecastDay {
            date,
            truth,
            pred,
            abs_err: truth.map(|t| (t - pred).abs()),
            abs_pct_err: truth.map(|t| 100.0 * ((t - pred) / t).abs()),
        });

        price_window.remove(0);
        price_window.push(vec![pred, pred, pred, pred]);
        struct_window.remove(0);
        struct_window.push(persisted_struct.clone());
    }

    Ok(ForecastResult { days })
}

/// One-step-ahead evaluation of a trained model over a dataset: every valid
/// window is predicted and compared against the observed next day.
pub fn evaluate_one_step(
    model: &TrainedModel,
    dataset: &AlignedDataset,
) -> Result<(Vec<DayError>, MetricsReport)> {
    let skeleton = build_windows(dataset, model.window_len())?;
    let mut dates = Vec::with_capacity(skeleton.len());
    let mut truth = Vec::with_capacity(skeleton.len());
    let mut preds = Vec::with_capacity(skeleton.len());
    for i in 0..skeleton.len() {
        let pred = predict_next(
            model,
            skeleton.window(StreamSel::Price, i),
            skeleton.window(StreamSel::Structural, i),
        )?;
        dates.push(skeleton.sample_dates[i]);
        truth.push(dataset.avg_price(skeleton.target_row(i)));
        preds.push(pred);
    }
    let rows = crate::metrics::per_day_errors(&dates, &truth, &preds)?;
    let report = compute_metrics(&truth, &preds)?;
    Ok((rows, report))
}
