//! z-score normalization, sliding-window sample construction, and fold
//! partitioning for cross-validation.
//!
//! Sample `i` feeds rows `i..i+w-1` of both (normalized) feature streams to
//! the networks and uses the normalized average price at row `i+w` as the
//! target. Windows that would span a flagged calendar gap are dropped, so
//! every sample covers `w + 1` consecutive days.

use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::dataio::AlignedDataset;
use crate::error::{Error, Result};
use crate::ndcore::{Matrix, SeededRng};

/// Per-column mean and sample standard deviation (divisor `n - 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl NormParams {
    pub fn cols(&self) -> usize {
        self.mu.len()
    }
}

/// Fit per-column statistics over all rows of `columns`.
pub fn zscore_fit(columns: &Matrix) -> Result<NormParams> {
    zscore_fit_rows(columns, None)
}

/// Fit per-column statistics over a row subset (all rows when `None`).
/// Exposed so cross-validation can fit on training rows only.
pub fn zscore_fit_rows(columns: &Matrix, rows: Option<&[usize]>) -> Result<NormParams> {
    let row_count = rows.map_or(columns.rows(), |r| r.len());
    if row_count < 2 {
        return Err(Error::domain(format!(
            "z-score fit needs at least 2 rows, got {row_count}"
        )));
    }
    let m = columns.cols();
    let row_iter = || -> Box<dyn Iterator<Item = usize>> {
        match rows {
            Some(r) => Box::new(r.iter().copied()),
            None => Box::new(0..columns.rows()),
        }
    };
    let mut mu = vec![0.0; m];
    for i in row_iter() {
        for (j, m_j) in mu.iter_mut().enumerate() {
            *m_j += columns.get(i, j);
        }
    }
    for m_j in mu.iter_mut() {
        *m_j /= row_count as f64;
    }
    // Two-pass variance: exact zero for constant columns.
    let mut ss = vec![0.0; m];
    for i in row_iter() {
        for (j, s_j) in ss.iter_mut().enumerate() {
            let d = columns.get(i, j) - mu[j];
            *s_j += d * d;
        }
    }
    let mut sigma = vec![0.0; m];
    for j in 0..m {
        sigma[j] = (ss[j] / (row_count as f64 - 1.0)).sqrt();
        if sigma[j] <= 0.0 {
            return Err(Error::domain(format!(
                "degenerate column {j}: zero variance over the fitted rows"
            )));
        }
    }
    Ok(NormParams { mu, sigma })
}

fn check_cols(params: &NormParams, columns: &Matrix, op: &'static str) -> Result<()> {
    if params.cols() != columns.cols() {
        return Err(Error::Shape {
            op,
            left_rows: 1,
            left_cols: params.cols(),
            right_rows: columns.rows(),
            right_cols: columns.cols(),
        });
    }
    Ok(())
}

/// `z = (x - mu) / sigma` per column.
pub fn zscore_apply(params: &NormParams, columns: &Matrix) -> Result<Matrix> {
    check_cols(params, columns, "zscore_apply")?;
    let mut out = columns.clone();
    let cols = columns.cols();
    for (idx, v) in out.data_mut().iter_mut().enumerate() {
        let j = idx % cols;
        *v = (*v - params.mu[j]) / params.sigma[j];
    }
    Ok(out)
}

/// `x = z * sigma + mu` per column; inverse of [`zscore_apply`].
pub fn zscore_invert(params: &NormParams, z: &Matrix) -> Result<Matrix> {
    check_cols(params, z, "zscore_invert")?;
    let mut out = z.clone();
    let cols = z.cols();
    for (idx, v) in out.data_mut().iter_mut().enumerate() {
        let j = idx % cols;
        *v = *v * params.sigma[j] + params.mu[j];
    }
    Ok(out)
}

/// Scalar versions for single values of column `j`.
pub fn zscore_apply_scalar(params: &NormParams, j: usize, x: f64) -> f64 {
    (x - params.mu[j]) / params.sigma[j]
}

pub fn zscore_invert_scalar(params: &NormParams, j: usize, z: f64) -> f64 {
    z * params.sigma[j] + params.mu[j]
}

/// Normalize both streams of a dataset with their respective parameters.
pub fn normalize_dataset(
    aligned: &AlignedDataset,
    price: &NormParams,
    structural: &NormParams,
) -> Result<AlignedDataset> {
    Ok(AlignedDataset {
        dates: aligned.dates.clone(),
        price: zscore_apply(price, &aligned.price)?,
        structural: zscore_apply(structural, &aligned.structural)?,
    })
}

/// Windowed supervised samples. `input1[i]` is the `w x 4` price window,
/// `input2[i]` the `w x 5` structural window, `output[i]` the normalized
/// next-day average price, and `sample_dates[i]` the target's calendar day.
#[derive(Debug, Clone)]
pub struct SampleSet {
    pub w: usize,
    pub input1: Vec<Matrix>,
    pub input2: Vec<Matrix>,
    pub output: Vec<f64>,
    pub sample_dates: Vec<NaiveDate>,
    /// Source row index of each sample's first input row; the target sits at
    /// `start_rows[i] + w`.
    pub start_rows: Vec<usize>,
}

/// Which stream's windows a consumer wants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamSel {
    Price,
    Structural,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.output.len()
    }

    pub fn is_empty(&self) -> bool {
        self.output.is_empty()
    }

    pub fn window(&self, stream: StreamSel, i: usize) -> &Matrix {
        match stream {
            StreamSel::Price => &self.input1[i],
            StreamSel::Structural => &self.input2[i],
        }
    }

    pub fn target_row(&self, i: usize) -> usize {
        self.start_rows[i] + self.w
    }

    /// Write the set as CSV shards, one file per component, for inspection.
    pub fn dump_csv(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let mut w1 = csv::Writer::from_path(dir.join("input1.csv"))?;
        w1.write_record(["sample", "step", "avg", "open", "low", "high"])?;
        for (i, m) in self.input1.iter().enumerate() {
            for t in 0..m.rows() {
                let r = m.row(t);
                w1.write_record([
                    i.to_string(),
                    t.to_string(),
                    r[0].to_string(),
                    r[1].to_string(),
                    r[2].to_string(),
                    r[3].to_string(),
                ])?;
            }
        }
        w1.flush()?;
        let mut w2 = csv::Writer::from_path(dir.join("input2.csv"))?;
        w2.write_record([
            "sample",
            "step",
            "block_size",
            "hash_rate",
            "difficulty",
            "tx_count",
            "miner_revenue",
        ])?;
        for (i, m) in self.input2.iter().enumerate() {
            for t in 0..m.rows() {
                let r = m.row(t);
                w2.write_record([
                    i.to_string(),
                    t.to_string(),
                    r[0].to_string(),
                    r[1].to_string(),
                    r[2].to_string(),
                    r[3].to_string(),
                    r[4].to_string(),
                ])?;
            }
        }
        w2.flush()?;
        let mut wo = csv::Writer::from_path(dir.join("output.csv"))?;
        wo.write_record(["sample", "date", "target"])?;
        for i in 0..self.len() {
            wo.write_record([
                i.to_string(),
                self.sample_dates[i].to_string(),
                self.output[i].to_string(),
            ])?;
        }
        wo.flush()?;
        Ok(())
    }
}

/// Build supervised windows of length `w` from an already-normalized
/// dataset. Windows (inputs plus target) spanning a flagged gap are dropped.
pub fn build_windows(aligned: &AlignedDataset, w: usize) -> Result<SampleSet> {
    let n = aligned.rows();
    if w == 0 || w >= n {
        return Err(Error::domain(format!(
            "window length must satisfy 1 <= w < n, got w={w} for n={n}"
        )));
    }
    let mut set = SampleSet {
        w,
        input1: Vec::new(),
        input2: Vec::new(),
        output: Vec::new(),
        sample_dates: Vec::new(),
        start_rows: Vec::new(),
    };
    // contiguous[i] == true when no gap separates rows i and i+1.
    let contiguous: Vec<bool> = (0..n - 1).map(|i| !aligned.gap_after(i)).collect();
    for start in 0..n - w {
        let target = start + w;
        if !contiguous[start..target].iter().all(|&c| c) {
            continue;
        }
        let rows1: Vec<Vec<f64>> = (start..target).map(|i| aligned.price.row(i).to_vec()).collect();
        let rows2: Vec<Vec<f64>> = (start..target)
            .map(|i| aligned.structural.row(i).to_vec())
            .collect();
        set.input1.push(Matrix::from_rows(&rows1)?);
        set.input2.push(Matrix::from_rows(&rows2)?);
        set.output.push(aligned.price.get(target, 0));
        set.sample_dates.push(aligned.dates[target]);
        set.start_rows.push(start);
    }
    Ok(set)
}

/// Fold partitioning scheme. Block folds are contiguous index ranges in
/// time order (the default: shuffling overlapping windows leaks across the
/// train/validation boundary). Shuffled folds use a seeded permutation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "scheme", content = "seed")]
pub enum FoldScheme {
    Block,
    Shuffled(u64),
}

/// Per-sample fold assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignments: Vec<usize>,
}

impl FoldPlan {
    pub fn fold_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] == fold)
            .collect()
    }

    pub fn complement_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignments.len())
            .filter(|&i| self.assignments[i] != fold)
            .collect()
    }
}

/// Split `n_samples` into `k` folds. Fold sizes differ by at most one, with
/// the remainder spread over the first folds.
pub fn kfold_split(n_samples: usize, k: usize, scheme: FoldScheme) -> Result<FoldPlan> {
    if k < 2 || k > n_samples {
        return Err(Error::domain(format!(
            "fold count must satisfy 2 <= k <= n_samples, got k={k} for n={n_samples}"
        )));
    }
    let base = n_samples / k;
    let remainder = n_samples % k;
    let order: Vec<usize> = match scheme {
        FoldScheme::Block => (0..n_samples).collect(),
        FoldScheme::Shuffled(seed) => {
            let mut order: Vec<usize> = (0..n_samples).collect();
            SeededRng::new(seed).shuffle(&mut order);
            order
        }
    };
    let mut assignments = vec![0; n_samples];
    let mut cursor = 0;
    for fold in 0..k {
        let size = base + usize::from(fold < remainder);
        for &sample in &order[cursor..cursor + size] {
            assignments[sample] = fold;
        }
        cursor += size;
    }
    Ok(FoldPlan { k, assignments })
}
