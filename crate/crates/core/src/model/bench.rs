//! Wall-clock comparison of full training runs across cell types and window
//! lengths. Every timed run sees identical data and config apart from the
//! cell type and `w`; streams train sequentially so timings are comparable.

use std::time::Instant;

use crate::dataio::AlignedDataset;
use crate::error::{Error, Result};
use crate::ndcore::{Matrix, SeededRng};
use crate::optim::{train_fusion, train_stream};
use crate::preprocess::{build_windows, normalize_dataset, zscore_fit, StreamSel};
use crate::rnn::{stream_forward, CellKind, FusionNetwork, StreamNetwork};

use super::PgruConfig;

#[derive(Debug, Clone)]
pub struct BenchResult {
    pub cell: CellKind,
    pub w: usize,
    pub runs_seconds: Vec<f64>,
    pub mean_seconds: f64,
}

/// One full training run: normalize, window, train both streams on all
/// samples, then fit the fusion network. Returns elapsed seconds.
pub fn time_full_training(dataset: &AlignedDataset, cfg: &PgruConfig) -> Result<f64> {
    let started = Instant::now();

    let price_norm = zscore_fit(&dataset.price)?;
    let struct_norm = zscore_fit(&dataset.structural)?;
    let normalized = normalize_dataset(dataset, &price_norm, &struct_norm)?;
    let samples = build_windows(&normalized, cfg.w)?;
    let all_idx: Vec<usize> = (0..samples.len()).collect();

    let root = SeededRng::new(cfg.seed);
    let price_net = StreamNetwork::new(
        cfg.cell,
        4,
        cfg.hidden_dim,
        cfg.num_layers,
        &cfg.head_hidden,
        &mut root.substream(0),
    )?;
    let struct_net = StreamNetwork::new(
        cfg.cell,
        5,
        cfg.hidden_dim,
        cfg.num_layers,
        &cfg.head_hidden,
        &mut root.substream(1),
    )?;
    let (price, _) = train_stream(
        &price_net,
        &samples,
        StreamSel::Price,
        &all_idx,
        &[],
        cfg.epochs,
        cfg.adam,
        &mut root.substream(2),
    )?;
    let (structural, _) = train_stream(
        &struct_net,
        &samples,
        StreamSel::Structural,
        &all_idx,
        &[],
        cfg.epochs,
        cfg.adam,
        &mut root.substream(3),
    )?;

    let mut rows = Vec::with_capacity(all_idx.len());
    let mut targets = Vec::with_capacity(all_idx.len());
    for &i in &all_idx {
        let p1 = stream_forward(&price, samples.window(StreamSel::Price, i))?.0;
        let p2 = stream_forward(&structural, samples.window(StreamSel::Structural, i))?.0;
        rows.push(vec![p1, p2]);
        targets.push(samples.output[i]);
    }
    let fusion_init = FusionNetwork::new(cfg.fusion_hidden, &mut root.substream(4))?;
    train_fusion(&fusion_init, &Matrix::from_rows(&rows)?, &targets, cfg.lm)?;

    Ok(started.elapsed().as_secs_f64())
}

/// Run the timing grid: `repeats` full trainings for every `(cell, w)`
/// combination, reporting per-combination means.
pub fn bench_training(
    dataset: &AlignedDataset,
    base: &PgruConfig,
    cells: &[CellKind],
    windows: &[usize],
    repeats: usize,
) -> Result<Vec<BenchResult>> {
    if repeats < 3 {
        return Err(Error::domain(format!(
            "benchmark needs at least 3 repeats for a stable mean, got {repeats}"
        )));
    }
    if cells.is_empty() || windows.is_empty() {
        return Err(Error::domain("benchmark needs at least one cell and one window".to_string()));
    }
    let mut results = Vec::with_capacity(cells.len() * windows.len());
    for &w in windows {
        for &cell in cells {
            let cfg = PgruConfig {
                w,
                cell,
                ..base.clone()
            };
            let mut runs = Vec::with_capacity(repeats);
            for _ in 0..repeats {
                runs.push(time_full_training(dataset, &cfg)?);
            }
            let mean = runs.iter().sum::<f64>() / runs.len() as f64;
            results.push(BenchResult {
                cell,
                w,
                runs_seconds: runs,
                mean_seconds: mean,
            });
        }
    }
    Ok(results)
}
