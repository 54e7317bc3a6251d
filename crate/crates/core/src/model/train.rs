//! Cross-validated training of the full pipeline.
//!
//! Per fold: fit normalization statistics (on training rows only in
//! leak-free mode), build windows, train the price and structural streams,
//! train the fusion network on the training split's stream predictions, and
//! evaluate the fused output on the validation split in raw USD. A
//! persistence baseline (predict tomorrow = today) is evaluated on the same
//! splits. The final model refits on all samples with the same recipe.

use rayon::prelude::*;
use serde::Serialize;

use crate::dataio::AlignedDataset;
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::ndcore::{Matrix, SeededRng};
use crate::optim::{train_fusion, train_stream, EpochStats};
use crate::preprocess::{
    build_windows, kfold_split, normalize_dataset, zscore_fit_rows, zscore_invert_scalar,
    NormParams, SampleSet, StreamSel,
};
use crate::rnn::{stream_forward, FusionNetwork, StreamNetwork};

use super::{NormalizationMode, PgruConfig, TrainedModel};

/// Validation metrics for one fold. Alongside the fused model, the two
/// individual streams and the persistence baseline are scored on the same
/// validation samples, all in raw USD.
#[derive(Debug, Clone, Serialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_valid: usize,
    pub fused: MetricsReport,
    pub price_only: MetricsReport,
    pub struct_only: MetricsReport,
    pub persistence: MetricsReport,
}

/// Cross-validation report: one row per fold plus pooled metrics over the
/// union of all validation predictions.
#[derive(Debug, Clone, Serialize)]
pub struct CvReport {
    pub folds: Vec<FoldReport>,
    pub pooled_fused: MetricsReport,
    pub pooled_price_only: MetricsReport,
    pub pooled_struct_only: MetricsReport,
    pub pooled_persistence: MetricsReport,
}

impl CvReport {
    /// CSV rendering: per-fold rows plus a `pooled` row; fused and
    /// persistence metric columns.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(
            "fold,n_train,n_valid,mse,rmse,mae,mape,\
             persistence_mse,persistence_rmse,persistence_mae,persistence_mape\n",
        );
        let line = |label: &str, n_train: String, n_valid: usize, m: &MetricsReport, p: &MetricsReport| {
            format!(
                "{label},{n_train},{n_valid},{},{},{},{},{},{},{},{}\n",
                m.mse, m.rmse, m.mae, m.mape, p.mse, p.rmse, p.mae, p.mape
            )
        };
        for f in &self.folds {
            out.push_str(&line(
                &f.fold.to_string(),
                f.n_train.to_string(),
                f.n_valid,
                &f.fused,
                &f.persistence,
            ));
        }
        let total_valid: usize = self.folds.iter().map(|f| f.n_valid).sum();
        out.push_str(&line(
            "pooled",
            String::new(),
            total_valid,
            &self.pooled_fused,
            &self.pooled_persistence,
        ));
        out
    }
}

/// Training byproducts that the CLI writes to disk.
#[derive(Debug, Clone)]
pub struct TrainingArtifacts {
    pub fold_histories: Vec<(usize, Vec<EpochStats>, Vec<EpochStats>)>,
    pub refit_histories: (Vec<EpochStats>, Vec<EpochStats>),
}

/// Sorted union of all source rows touched by the given samples (inputs and
/// target): rows `start..=start+w` per sample. In leak-free mode the
/// normalization statistics are fitted on exactly these rows.
pub fn train_row_union(set: &SampleSet, indices: &[usize]) -> Vec<usize> {
    let mut mark = vec![false; set.start_rows.iter().map(|&s| s + set.w + 1).max().unwrap_or(0)];
    for &i in indices {
        let start = set.start_rows[i];
        for row in start..=start + set.w {
            mark[row] = true;
        }
    }
    (0..mark.len()).filter(|&r| mark[r]).collect()
}

struct FoldOutcome {
    report: FoldReport,
    truth: Vec<f64>,
    fused: Vec<f64>,
    price_only: Vec<f64>,
    struct_only: Vec<f64>,
    persistence: Vec<f64>,
    price_history: Vec<EpochStats>,
    struct_history: Vec<EpochStats>,
}

struct TrainedPair {
    price: StreamNetwork,
    structural: StreamNetwork,
    fusion: FusionNetwork,
    price_norm: NormParams,
    struct_norm: NormParams,
    samples: SampleSet,
    price_history: Vec<EpochStats>,
    struct_history: Vec<EpochStats>,
}

/// Normalize, window, and train streams + fusion for one split. `valid_idx`
/// may be empty (final refit).
fn train_split(
    raw: &AlignedDataset,
    skeleton: &SampleSet,
    cfg: &PgruConfig,
    global_norm: Option<&(NormParams, NormParams)>,
    train_idx: &[usize],
    valid_idx: &[usize],
    rng_base: u64,
) -> Result<TrainedPair> {
    let root = SeededRng::new(cfg.seed);
    let (price_norm, struct_norm) = match (cfg.normalization, global_norm) {
        (NormalizationMode::Global, Some((p, s))) => (p.clone(), s.clone()),
        _ => {
            let rows = train_row_union(skeleton, train_idx);
            (
                zscore_fit_rows(&raw.price, Some(&rows))?,
                zscore_fit_rows(&raw.structural, Some(&rows))?,
            )
        }
    };
    let normalized = normalize_dataset(raw, &price_norm, &struct_norm)?;
    let samples = build_windows(&normalized, cfg.w)?;

    let mut price_init_rng = root.substream(rng_base);
    let mut struct_init_rng = root.substream(rng_base + 1);
    let price_net = StreamNetwork::new(
        cfg.cell,
        4,
        cfg.hidden_dim,
        cfg.num_layers,
        &cfg.head_hidden,
        &mut price_init_rng,
    )?;
    let struct_net = StreamNetwork::new(
        cfg.cell,
        5,
        cfg.hidden_dim,
        cfg.num_layers,
        &cfg.head_hidden,
        &mut struct_init_rng,
    )?;

    // The two streams share no state and train concurrently.
    let mut price_train_rng = root.substream(rng_base + 2);
    let mut struct_train_rng = root.substream(rng_base + 3);
    let (price_res, struct_res) = rayon::join(
        || {
            train_stream(
                &price_net,
                &samples,
                StreamSel::Price,
                train_idx,
                valid_idx,
                cfg.epochs,
                cfg.adam,
                &mut price_train_rng,
            )
        },
        || {
            train_stream(
                &struct_net,
                &samples,
                StreamSel::Structural,
                train_idx,
                valid_idx,
                cfg.epochs,
                cfg.adam,
                &mut struct_train_rng,
            )
        },
    );
    let (price, price_history) = price_res?;
    let (structural, struct_history) = struct_res?;

    // Fusion trains on the training split's stream predictions.
    let mut pred_rows = Vec::with_capacity(train_idx.len());
    let mut targets = Vec::with_capacity(train_idx.len());
    for &i in train_idx {
        let p1 = stream_forward(&price, samples.window(StreamSel::Price, i))?.0;
        let p2 = stream_forward(&structural, samples.window(StreamSel::Structural, i))?.0;
        pred_rows.push(vec![p1, p2]);
        targets.push(samples.output[i]);
    }
    let stream_preds = Matrix::from_rows(&pred_rows)?;
    let mut fusion_rng = root.substream(rng_base + 4);
    let fusion_init = FusionNetwork::new(cfg.fusion_hidden, &mut fusion_rng)?;
    let fusion = train_fusion(&fusion_init, &stream_preds, &targets, cfg.lm)?;

    Ok(TrainedPair {
        price,
        structural,
        fusion,
        price_norm,
        struct_norm,
        samples,
        price_history,
        struct_history,
    })
}

fn run_fold(
    raw: &AlignedDataset,
    skeleton: &SampleSet,
    cfg: &PgruConfig,
    global_norm: Option<&(NormParams, NormParams)>,
    fold: usize,
    train_idx: &[usize],
    valid_idx: &[usize],
) -> Result<FoldOutcome> {
    let pair = train_split(
        raw,
        skeleton,
        cfg,
        global_norm,
        train_idx,
        valid_idx,
        fold as u64 * 8,
    )?;

    let mut truth = Vec::with_capacity(valid_idx.len());
    let mut fused = Vec::with_capacity(valid_idx.len());
    let mut price_only = Vec::with_capacity(valid_idx.len());
    let mut struct_only = Vec::with_capacity(valid_idx.len());
    let mut persistence = Vec::with_capacity(valid_idx.len());
    for &i in valid_idx {
        let p1 = stream_forward(&pair.price, pair.samples.window(StreamSel::Price, i))?.0;
        let p2 =
            stream_forward(&pair.structural, pair.samples.window(StreamSel::Structural, i))?.0;
        let fused_norm = pair.fusion.predict(p1, p2)?;
        let target_row = pair.samples.target_row(i);
        truth.push(raw.avg_price(target_row));
        fused.push(zscore_invert_scalar(&pair.price_norm, 0, fused_norm));
        price_only.push(zscore_invert_scalar(&pair.price_norm, 0, p1));
        struct_only.push(zscore_invert_scalar(&pair.price_norm, 0, p2));
        // Windows never span gaps, so the row before the target is the last
        // observed day.
        persistence.push(raw.avg_price(target_row - 1));
    }

    let report = FoldReport {
        fold,
        n_train: train_idx.len(),
        n_valid: valid_idx.len(),
        fused: compute_metrics(&truth, &fused)?,
        price_only: compute_metrics(&truth, &price_only)?,
        struct_only: compute_metrics(&truth, &struct_only)?,
        persistence: compute_metrics(&truth, &persistence)?,
    };
    Ok(FoldOutcome {
        report,
        truth,
        fused,
        price_only,
        struct_only,
        persistence,
        price_history: pair.price_history,
        struct_history: pair.struct_history,
    })
}

/// Cross-validate and refit the full pipeline.
pub fn train_pgru(
    dataset: &AlignedDataset,
    cfg: &PgruConfig,
) -> Result<(TrainedModel, CvReport, TrainingArtifacts)> {
    let n = dataset.rows();
    if n <= cfg.w + cfg.folds {
        return Err(Error::domain(format!(
            "dataset has {n} rows; need more than w + k = {}",
            cfg.w + cfg.folds
        )));
    }
    // The sample skeleton (which windows exist) depends only on dates and w,
    // so fold assignment happens before any normalization.
    let skeleton = build_windows(dataset, cfg.w)?;
    let plan = kfold_split(skeleton.len(), cfg.folds, cfg.fold_scheme)?;

    let global_norm = match cfg.normalization {
        NormalizationMode::Global => Some((
            zscore_fit_rows(&dataset.price, None)?,
            zscore_fit_rows(&dataset.structural, None)?,
        )),
        NormalizationMode::LeakFree => None,
    };

    let outcomes: Vec<FoldOutcome> = (0..cfg.folds)
        .into_par_iter()
        .map(|fold| {
            let valid_idx = plan.fold_indices(fold);
            let train_idx = plan.complement_indices(fold);
            run_fold(
                dataset,
                &skeleton,
                cfg,
                global_norm.as_ref(),
                fold,
                &train_idx,
                &valid_idx,
            )
            .map_err(|e| e.in_fold(fold))
        })
        .collect::<Result<Vec<_>>>()?;

    let pool = |select: fn(&FoldOutcome) -> &Vec<f64>| -> Vec<f64> {
        outcomes.iter().flat_map(|o| select(o).iter().copied()).collect()
    };
    let truth_all = pool(|o| &o.truth);
    let report = CvReport {
        folds: outcomes.iter().map(|o| o.report.clone()).collect(),
        pooled_fused: compute_metrics(&truth_all, &pool(|o| &o.fused))?,
        pooled_price_only: compute_metrics(&truth_all, &pool(|o| &o.price_only))?,
        pooled_struct_only: compute_metrics(&truth_all, &pool(|o| &o.struct_only))?,
        pooled_persistence: compute_metrics(&truth_all, &pool(|o| &o.persistence))?,
    };

    // Final refit on all samples with the same recipe.
    let all_idx: Vec<usize> = (0..skeleton.len()).collect();
    let refit = train_split(
        dataset,
        &skeleton,
        cfg,
        global_norm.as_ref(),
        &all_idx,
        &[],
        cfg.folds as u64 * 8,
    )?;

    let model = TrainedModel {
        price_stream: refit.price,
        struct_stream: refit.structural,
        fusion: refit.fusion,
        price_norm: refit.price_norm,
        struct_norm: refit.struct_norm,
        config: cfg.clone(),
    };
    let artifacts = TrainingArtifacts {
        fold_histories: outcomes
            .into_iter()
            .map(|o| (o.report.fold, o.price_history, o.struct_history))
            .collect(),
        refit_histories: (refit.price_history, refit.struct_history),
    };
    Ok((model, report, artifacts))
}
