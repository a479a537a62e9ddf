//! JSON checkpoint containers for both training stages.
//!
//! Floats are written with shortest round-trip formatting and parsed exactly,
//! so save/load is lossless. An uncertainty checkpoint records the sha256 of
//! the backbone checkpoint file it was trained against.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backbone::{Backbone, ModelKind, TrainedBackbone};
use crate::config::RunConfig;
use crate::data::InteractionDataset;
use crate::matrix::Matrix;
use crate::uncertainty::{Activation, TrainedUncertainty, UncertaintyParameters};

pub const BACKBONE_FORMAT: &str = "aur-backbone/1";
pub const UNCERTAINTY_FORMAT: &str = "aur-uncertainty/1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint {path} not found or unreadable: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint {path} is not valid JSON for this container: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
}

/// sha256 of raw bytes, lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneCheckpoint {
    pub format: String,
    pub model_kind: ModelKind,
    pub num_users: usize,
    pub num_items: usize,
    pub dim: usize,
    pub num_layers: usize,
    pub seed: u64,
    pub dataset_hash: String,
    pub config: RunConfig,
    pub loss_trace: Vec<f64>,
    pub parameters: Matrix,
}

impl BackboneCheckpoint {
    pub fn new(trained: &TrainedBackbone, dataset: &InteractionDataset, config: &RunConfig) -> Self {
        BackboneCheckpoint {
            format: BACKBONE_FORMAT.into(),
            model_kind: trained.model.kind(),
            num_users: dataset.num_users(),
            num_items: dataset.num_items(),
            dim: trained.model.dim(),
            num_layers: trained.model.num_layers(),
            seed: config.seed,
            dataset_hash: dataset.content_hash().to_string(),
            config: config.clone(),
            loss_trace: trained.loss_trace.clone(),
            parameters: trained.model.parameters().clone(),
        }
    }

    /// Rebuilds the model after checking it was trained on `dataset`.
    pub fn restore(&self, dataset: &InteractionDataset) -> Result<Backbone, CheckpointError> {
        check_format(&self.format, BACKBONE_FORMAT)?;
        check_dataset(&self.dataset_hash, dataset)?;
        Backbone::from_table(dataset, self.model_kind, self.parameters.clone(), self.num_layers)
            .map_err(|e| CheckpointError::Incompatible(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyCheckpoint {
    pub format: String,
    pub num_items: usize,
    pub dim: usize,
    pub scale_k: f64,
    pub activation: Activation,
    pub seed: u64,
    pub dataset_hash: String,
    /// sha256 of the backbone checkpoint file.
    pub backbone_hash: String,
    pub config: RunConfig,
    pub loss_trace: Vec<f64>,
    pub item_rep_table: Matrix,
    pub history_table: Matrix,
}

impl UncertaintyCheckpoint {
    pub fn new(
        trained: &TrainedUncertainty,
        dataset: &InteractionDataset,
        backbone_hash: &str,
        config: &RunConfig,
    ) -> Self {
        let p = &trained.params;
        UncertaintyCheckpoint {
            format: UNCERTAINTY_FORMAT.into(),
            num_items: p.num_items(),
            dim: p.dim(),
            scale_k: p.scale_k(),
            activation: p.activation(),
            seed: config.seed,
            dataset_hash: dataset.content_hash().to_string(),
            backbone_hash: backbone_hash.into(),
            config: config.clone(),
            loss_trace: trained.loss_trace.clone(),
            item_rep_table: p.item_rep_table().clone(),
            history_table: p.history_table().clone(),
        }
    }

    /// `scale_k` overrides the stored K (ranking only; s does not depend on K).
    pub fn restore(
        &self,
        dataset: &InteractionDataset,
        backbone_hash: &str,
        scale_k: Option<f64>,
    ) -> Result<UncertaintyParameters, CheckpointError> {
        check_format(&self.format, UNCERTAINTY_FORMAT)?;
        check_dataset(&self.dataset_hash, dataset)?;
        if self.backbone_hash != backbone_hash {
            return Err(CheckpointError::Incompatible(format!(
                "uncertainty checkpoint was trained against backbone {}, got {backbone_hash}",
                self.backbone_hash
            )));
        }
        if self.num_items != dataset.num_items() {
            return Err(CheckpointError::Incompatible(format!(
                "{} items in checkpoint, {} in dataset",
                self.num_items,
                dataset.num_items()
            )));
        }
        UncertaintyParameters::new(
            self.item_rep_table.clone(),
            self.history_table.clone(),
            scale_k.unwrap_or(self.scale_k),
            self.activation,
        )
        .map_err(|e| CheckpointError::Incompatible(e.to_string()))
    }
}

fn check_format(found: &str, expected: &str) -> Result<(), CheckpointError> {
    if found != expected {
        return Err(CheckpointError::Incompatible(format!("format `{found}`, expected `{expected}`")));
    }
    Ok(())
}

fn check_dataset(hash: &str, dataset: &InteractionDataset) -> Result<(), CheckpointError> {
    let actual = dataset.content_hash().to_string();
    if hash != actual {
        return Err(CheckpointError::Incompatible(format!(
            "checkpoint dataset hash {hash} does not match loaded dataset {actual}"
        )));
    }
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("checkpoint serializes");
    s.push('\n');
    s
}

/// Writes `value` and returns the sha256 of the bytes written.
pub fn save<T: Serialize>(value: &T, path: &Path) -> Result<String, CheckpointError> {
    let text = to_json(value);
    fs::write(path, &text).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(sha256_hex(text.as_bytes()))
}

/// Reads a container and the sha256 of its bytes.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<(T, String), CheckpointError> {
    let bytes = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let value = serde_json::from_slice(&bytes).map_err(|source| CheckpointError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    Ok((value, sha256_hex(&bytes)))
}
