//! Training loops: Adam for the recurrent streams, Levenberg-Marquardt for
//! the fusion network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::{Matrix, SeededRng};
use crate::preprocess::{SampleSet, StreamSel};
use crate::rnn::{stream_backward_into, stream_forward, FusionNetwork, ParamSet, StreamNetwork};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::lm::{lm_step_problem, sse, FusionFit, LeastSquaresProblem, LmConfig, LmState};

/// Sets below this size train full-batch; larger ones use seeded
/// mini-batches of [`MINI_BATCH`].
pub const FULL_BATCH_LIMIT: usize = 4096;
pub const MINI_BATCH: usize = 64;

/// One epoch of history. `valid_mse` is absent when no validation split was
/// given (final refits).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_mse: f64,
    pub valid_mse: Option<f64>,
}

fn mean_squared_error(
    net: &StreamNetwork,
    samples: &SampleSet,
    stream: StreamSel,
    indices: &[usize],
) -> Result<f64> {
    let mut total = 0.0;
    for &i in indices {
        let (pred, _) = stream_forward(net, samples.window(stream, i))?;
        let e = pred - samples.output[i];
        total += e * e;
    }
    Ok(total / indices.len() as f64)
}

/// Train one stream against the normalized targets by minimizing MSE.
/// Returns the parameters from the best-validation epoch (best-train when no
/// validation split is given) together with the per-epoch history.
#[allow(clippy::too_many_arguments)]
pub fn train_stream(
    net: &StreamNetwork,
    samples: &SampleSet,
    stream: StreamSel,
    train_idx: &[usize],
    valid_idx: &[usize],
    epochs: usize,
    adam: AdamConfig,
    rng: &mut SeededRng,
) -> Result<(StreamNetwork, Vec<EpochStats>)> {
    if train_idx.is_empty() {
        return Err(Error::domain("training split is empty".to_string()));
    }
    let mut net = net.clone();
    let mut state = AdamState::new(&net, adam);
    let mut history = Vec::with_capacity(epochs);
    let mut best = net.clone();
    let mut best_score = f64::INFINITY;

    let full_batch = train_idx.len() < FULL_BATCH_LIMIT;
    let mut order: Vec<usize> = train_idx.to_vec();

    for epoch in 0..epochs {
        let mut epoch_loss = 0.0;
        if full_batch {
            let mut grads = net.zeros_like();
            let scale = 1.0 / train_idx.len() as f64;
            for &i in train_idx {
                let (pred, cache) = stream_forward(&net, samples.window(stream, i))?;
                let e = pred - samples.output[i];
                epoch_loss += e * e * scale;
                stream_backward_into(&net, &cache, 2.0 * e * scale, &mut grads)?;
            }
            adam_step(&mut state, &mut net, &grads)?;
        } else {
            rng.shuffle(&mut order);
            let mut batch_losses = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(MINI_BATCH) {
                let mut grads = net.zeros_like();
                let scale = 1.0 / chunk.len() as f64;
                let mut loss = 0.0;
                for &i in chunk {
                    let (pred, cache) = stream_forward(&net, samples.window(stream, i))?;
                    let e = pred - samples.output[i];
                    loss += e * e * scale;
                    stream_backward_into(&net, &cache, 2.0 * e * scale, &mut grads)?;
                }
                adam_step(&mut state, &mut net, &grads)?;
                batch_losses += loss;
                batches += 1;
            }
            epoch_loss = batch_losses / batches as f64;
        }

        if !epoch_loss.is_finite() {
            return Err(Error::numeric(format!(
                "training diverged at epoch {epoch}: loss {epoch_loss}"
            )));
        }

        let valid_mse = if valid_idx.is_empty() {
            None
        } else {
            Some(mean_squared_error(&net, samples, stream, valid_idx)?)
        };
        history.push(EpochStats {
            epoch,
            train_mse: epoch_loss,
            valid_mse,
        });

        let score = valid_mse.unwrap_or(epoch_loss);
        if score < best_score {
            best_score = score;
            best = net.clone();
        }
    }

    Ok((best, history))
}

/// Fit the fusion network on `(stream prediction pair, target)` rows with
/// Levenberg-Marquardt, running until the SSE improvement of an accepted
/// step falls below `tol` or `max_iters` trials elapse.
pub fn train_fusion(
    fusion: &FusionNetwork,
    stream_preds: &Matrix,
    targets: &[f64],
    lm: LmConfig,
) -> Result<FusionNetwork> {
    let params = fusion.param_count();
    if stream_preds.rows() < params {
        return Err(Error::domain(format!(
            "underdetermined fusion fit: {} samples for {params} parameters",
            stream_preds.rows()
        )));
    }
    let mut problem = FusionFit::new(fusion.clone(), stream_preds, targets)?;
    let mut state = LmState::new(lm);
    let mut best = problem.fusion.clone();
    let mut best_sse = sse(&problem.residuals()?);
    let mut last_accepted_sse = best_sse;

    for _ in 0..lm.max_iters {
        let accepted = lm_step_problem(&mut problem, &mut state)?;
        if accepted {
            let current = sse(&problem.residuals()?);
            if current < best_sse {
                best_sse = current;
                best = problem.fusion.clone();
            }
            if (last_accepted_sse - current).abs() < lm.tol {
                break;
            }
            last_accepted_sse = current;
        }
    }
    Ok(best)
}
