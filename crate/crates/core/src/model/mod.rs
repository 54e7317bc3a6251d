//! End-to-end pipeline: per-fold training of both streams, fusion training
//! on the training split's stream predictions, cross-validated evaluation in
//! raw USD, prediction, and recursive multi-day forecasting.

mod checkpoint;
mod forecast;
mod train;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, DatasetInfo, RunManifest, CHECKPOINT_FORMAT,
    MANIFEST_FORMAT,
};
pub use forecast::{
    evaluate_one_step, forecast_horizon, predict_next, ForecastDay, ForecastResult,
};
pub use train::{train_pgru, train_row_union, CvReport, FoldReport, TrainingArtifacts};

use serde::{Deserialize, Serialize};

use crate::optim::{AdamConfig, LmConfig};
use crate::preprocess::{FoldScheme, NormParams};
use crate::rnn::{CellKind, FusionNetwork, StreamNetwork};

/// Where normalization statistics come from.
///
/// `LeakFree` fits per fold on the rows touched by training samples only;
/// `Global` fits once on the whole series before splitting, which leaks
/// validation statistics into training but matches the common
/// normalize-then-split procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationMode {
    LeakFree,
    Global,
}

impl std::fmt::Display for NormalizationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormalizationMode::LeakFree => write!(f, "leakfree"),
            NormalizationMode::Global => write!(f, "global"),
        }
    }
}

impl std::str::FromStr for NormalizationMode {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "leakfree" | "leak-free" => Ok(NormalizationMode::LeakFree),
            "global" => Ok(NormalizationMode::Global),
            other => Err(crate::error::Error::domain(format!(
                "unknown normalization mode '{other}' (expected leakfree or global)"
            ))),
        }
    }
}

fn default_w() -> usize {
    15
}
fn default_cell() -> CellKind {
    CellKind::Gru
}
fn default_hidden_dim() -> usize {
    32
}
fn default_num_layers() -> usize {
    1
}
fn default_head_hidden() -> Vec<usize> {
    vec![8]
}
fn default_fusion_hidden() -> usize {
    4
}
fn default_epochs() -> usize {
    200
}
fn default_folds() -> usize {
    10
}
fn default_fold_scheme() -> FoldScheme {
    FoldScheme::Block
}
fn default_seed() -> u64 {
    42
}
fn default_normalization() -> NormalizationMode {
    NormalizationMode::LeakFree
}

/// Everything that determines a training run. Serialized into checkpoints
/// and run manifests so results are reproducible from the file alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PgruConfig {
    /// Window length in days.
    #[serde(default = "default_w")]
    pub w: usize,
    #[serde(default = "default_cell")]
    pub cell: CellKind,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    /// Recurrent layers per stream.
    #[serde(default = "default_num_layers")]
    pub num_layers: usize,
    /// Hidden sizes of the dense head (tanh layers before the linear output).
    #[serde(default = "default_head_hidden")]
    pub head_hidden: Vec<usize>,
    /// Hidden units of the fusion network; 0 means purely linear fusion.
    #[serde(default = "default_fusion_hidden")]
    pub fusion_hidden: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_fold_scheme")]
    pub fold_scheme: FoldScheme,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_normalization")]
    pub normalization: NormalizationMode,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub lm: LmConfig,
}

impl Default for PgruConfig {
    fn default() -> Self {
        PgruConfig {
            w: default_w(),
            cell: default_cell(),
            hidden_dim: default_hidden_dim(),
            num_layers: default_num_layers(),
            head_hidden: default_head_hidden(),
            fusion_hidden: default_fusion_hidden(),
            epochs: default_epochs(),
            folds: default_folds(),
            fold_scheme: default_fold_scheme(),
            seed: default_seed(),
            normalization: default_normalization(),
            adam: AdamConfig::default(),
            lm: LmConfig::default(),
        }
    }
}

/// A fully trained pipeline: both stream networks, the fusion network, and
/// the normalization statistics they were trained with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub price_stream: StreamNetwork,
    pub struct_stream: StreamNetwork,
    pub fusion: FusionNetwork,
    pub price_norm: NormParams,
    pub struct_norm: NormParams,
    pub config: PgruConfig,
}

impl TrainedModel {
    pub fn window_len(&self) -> usize {
        self.config.w
    }
}
