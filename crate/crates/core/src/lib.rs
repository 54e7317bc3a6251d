//! Time-series forecasting toolkit built around a pair of parallel recurrent
//! streams fused by a small feedforward network.
//!
//! One stream reads daily price features (average, open, low, high), the
//! other reads blockchain network features (block size, hash rate,
//! difficulty, transaction count, miner revenue). Each stream unrolls a GRU
//! or LSTM cell over a sliding window of `w` days and emits a scalar
//! next-day prediction; a fusion network combines the two scalars into the
//! final forecast. Streams train with Adam, the fusion net with
//! Levenberg-Marquardt, and k-fold cross-validation reports accuracy in raw
//! USD.
//!
//! Modules:
//! - [`ndcore`] — dense matrices, elementwise maps, seeded RNG
//! - [`dataio`] — CSV ingestion, validation, date alignment
//! - [`preprocess`] — z-score normalization, sliding windows, fold plans
//! - [`rnn`] — GRU/LSTM cells, stream networks, exact BPTT, fusion MLP
//! - [`optim`] — Adam, Levenberg-Marquardt, training loops
//! - [`model`] — end-to-end pipeline, forecasting, checkpoints
//! - [`metrics`] — MSE/RMSE/MAE/MAPE and per-day error reports
//! - [`synth`] — deterministic synthetic dataset generator

pub mod dataio;
pub mod error;
pub mod metrics;
pub mod model;
pub mod ndcore;
pub mod optim;
pub mod preprocess;
pub mod rnn;
pub mod synth;

pub use dataio::{align, load_price_csv, load_struct_csv, AlignedDataset, LoadReport};
pub use error::{Error, ErrorClass, Result};
pub use metrics::{compute_metrics, per_day_errors, DayError, MetricsReport};
pub use model::{
    forecast_horizon, predict_next, train_pgru, CvReport, ForecastResult, NormalizationMode,
    PgruConfig, TrainedModel,
};
pub use ndcore::{Matrix, SeededRng};
pub use preprocess::{
    build_windows, kfold_split, zscore_fit, FoldPlan, FoldScheme, NormParams, SampleSet,
};
pub use rnn::{CellKind, FusionNetwork, StreamNetwork};
pub use optim::{AdamConfig, LmConfig};
