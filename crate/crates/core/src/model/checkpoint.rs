//! Checkpoint and run-manifest files.
//!
//! Checkpoints are versioned JSON containers holding the cell type, all
//! parameter tensors of both streams and the fusion network, the
//! normalization statistics used at training time, and the config snapshot.
//! Writing is deterministic: identical models serialize to identical bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataio::AlignedDataset;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

use super::{CvReport, PgruConfig, TrainedModel};

pub const CHECKPOINT_FORMAT: &str = "pgru-checkpoint-v1";
pub const MANIFEST_FORMAT: &str = "pgru-manifest-v1";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    model: TrainedModel,
}

pub fn save_checkpoint(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let file = CheckpointFile {
        format: CHECKPOINT_FORMAT.to_string(),
        model: model.clone(),
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.as_ref().display()),
        ))
    })?;
    let file: CheckpointFile = serde_json::from_str(&text)?;
    if file.format != CHECKPOINT_FORMAT {
        return Err(Error::validation(format!(
            "unsupported checkpoint format '{}', expected '{CHECKPOINT_FORMAT}'",
            file.format
        )));
    }
    Ok(file.model)
}

/// Dataset fingerprint recorded in run manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub price_sha256: String,
    pub structural_sha256: String,
    pub aligned_rows: usize,
    pub first_date: String,
    pub last_date: String,
}

impl DatasetInfo {
    pub fn new(
        price_path: impl AsRef<Path>,
        struct_path: impl AsRef<Path>,
        aligned: &AlignedDataset,
    ) -> Result<Self> {
        Ok(DatasetInfo {
            price_sha256: file_sha256(price_path)?,
            structural_sha256: file_sha256(struct_path)?,
            aligned_rows: aligned.rows(),
            first_date: aligned.dates.first().map(|d| d.to_string()).unwrap_or_default(),
            last_date: aligned.dates.last().map(|d| d.to_string()).unwrap_or_default(),
        })
    }
}

fn file_sha256(path: impl AsRef<Path>) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}

/// Metric summary stored in the manifest: pooled cross-validation numbers
/// for the fused model, both single streams, and the persistence baseline.
#[derive(Debug, Clone, Serialize)]
pub struct MetricSummary {
    pub fused: MetricsReport,
    pub price_only: MetricsReport,
    pub struct_only: MetricsReport,
    pub persistence: MetricsReport,
}

/// Reproducibility record written next to every checkpoint.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub format: String,
    pub config: PgruConfig,
    pub dataset: DatasetInfo,
    pub metrics: MetricSummary,
}

impl RunManifest {
    pub fn new(config: &PgruConfig, dataset: DatasetInfo, report: &CvReport) -> Self {
        RunManifest {
            format: MANIFEST_FORMAT.to_string(),
            config: config.clone(),
            dataset,
            metrics: MetricSummary {
                fused: report.pooled_fused,
                price_only: report.pooled_price_only,
                struct_only: report.pooled_struct_only,
                persistence: report.pooled_persistence,
            },
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }
}
