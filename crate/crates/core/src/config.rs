//! Effective run configuration, echoed into every artifact.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::backbone::{BackboneConfig, ModelKind};
use crate::data::{DataFormat, SyntheticSpec};
use crate::error::TrainError;
use crate::ranking::Blend;
use crate::uncertainty::{Activation, UncertaintyTrainConfig};

pub const DEFAULT_LAMBDA_GRID: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub train_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub format: DataFormat,
    /// Used when no data paths are given.
    pub synthetic: Option<SyntheticSpec>,

    pub model: ModelKind,
    pub dim: usize,
    pub num_layers: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub backbone_epochs: usize,
    pub reg: f64,
    pub negative_rate: f64,

    pub uncertainty_dim: usize,
    pub uncertainty_learning_rate: f64,
    pub uncertainty_epochs: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub scale_k: f64,
    pub activation: Activation,
    pub item_subsample: Option<usize>,

    pub early_stop: bool,
    /// Blend weight for single-λ commands.
    pub lambda: f64,
    /// Blend weights swept by the pipeline.
    pub lambda_grid: Vec<f64>,
    pub k_list: Vec<usize>,
    pub seed: u64,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let b = BackboneConfig::default();
        let u = UncertaintyTrainConfig::default();
        RunConfig {
            train_path: None,
            test_path: None,
            format: DataFormat::Adjlist,
            synthetic: None,
            model: b.kind,
            dim: b.dim,
            num_layers: b.num_layers,
            learning_rate: b.learning_rate,
            batch_size: b.batch_size,
            backbone_epochs: b.epochs,
            reg: b.reg,
            negative_rate: b.negative_rate,
            uncertainty_dim: u.dim,
            uncertainty_learning_rate: u.learning_rate,
            uncertainty_epochs: u.epochs,
            alpha: u.alpha,
            beta: u.beta,
            gamma: u.gamma,
            scale_k: u.scale_k,
            activation: u.activation,
            item_subsample: None,
            early_stop: false,
            lambda: 1.0,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            k_list: vec![20, 50],
            seed: 0,
            workers: 1,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn backbone_config(&self) -> BackboneConfig {
        BackboneConfig {
            kind: self.model,
            dim: self.dim,
            num_layers: self.num_layers,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.backbone_epochs,
            reg: self.reg,
            negative_rate: self.negative_rate,
            seed: self.seed,
            early_stop: self.early_stop,
        }
    }

    pub fn uncertainty_config(&self) -> UncertaintyTrainConfig {
        UncertaintyTrainConfig {
            dim: self.uncertainty_dim,
            scale_k: self.scale_k,
            activation: self.activation,
            alpha: self.alpha,
            beta: self.beta,
            gamma: self.gamma,
            epochs: self.uncertainty_epochs,
            learning_rate: self.uncertainty_learning_rate,
            batch_size: self.batch_size,
            seed: self.seed,
            item_subsample: self.item_subsample,
            early_stop: self.early_stop,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.backbone_config().validate()?;
        self.uncertainty_config().validate()?;
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.train_path.is_some() != self.test_path.is_some() {
            return bad("train_path and test_path must be given together");
        }
        if let Some(spec) = &self.synthetic {
            spec.validate()?;
        }
        for &l in std::iter::once(&self.lambda).chain(&self.lambda_grid) {
            if Blend::new(l).is_err() {
                return Err(TrainError::InvalidConfig(format!("blend weight {l} outside [0, 1]")));
            }
        }
        if self.lambda_grid.is_empty() {
            return bad("lambda_grid must not be empty");
        }
        if self.k_list.is_empty() || self.k_list.contains(&0) {
            return bad("k_list must be non-empty and positive");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        Ok(())
    }
}
