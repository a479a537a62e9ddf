//! Sequential two-stage run (backbone, then uncertainty against the frozen
//! backbone) followed by evaluation over the blend grid.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backbone::train_backbone;
use crate::checkpoint::CheckpointError;
use crate::config::RunConfig;
use crate::data::{compute_tail_partition, generate_synthetic, load_interactions, DataError, InteractionDataset};
use crate::error::TrainError;
use crate::eval::{
    diagnose, evaluate, kl_diagnostic, mean_coverage_length, DiagnosticsReport, EvalError, EvalReport, Protocol,
};
use crate::optim::OptimError;
use crate::ranking::{AurScorer, Blend, RankingError};
use crate::uncertainty::{train_uncertainty, UncertaintyParameters};

#[derive(Debug, Error)]
pub enum AurError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Ranking(#[from] RankingError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl AurError {
    /// 2 usage/config, 3 data or file I/O, 4 numeric divergence, 5 missing or
    /// incompatible checkpoint.
    pub fn exit_code(&self) -> i32 {
        match self {
            AurError::Config(_) | AurError::Ranking(_) => 2,
            AurError::Eval(e) => match e {
                EvalError::InvalidCutoffs | EvalError::ZeroWorkers => 2,
                EvalError::NoUsers(_) => 3,
                EvalError::ItemMismatch { .. } => 5,
            },
            AurError::Data(DataError::InvalidSpec(_)) => 2,
            AurError::Data(_) | AurError::Output { .. } => 3,
            AurError::Checkpoint(_) => 5,
            AurError::Train(e) => match e {
                TrainError::InvalidConfig(_) => 2,
                TrainError::Data(DataError::InvalidSpec(_)) => 2,
                TrainError::Data(_) => 3,
                TrainError::DimensionMismatch(_) => 5,
                TrainError::Optim(OptimError::InvalidConfig(_)) => 2,
                TrainError::Optim(OptimError::ShapeMismatch { .. }) => 5,
                TrainError::Diverged { .. } | TrainError::NonFinitePrediction { .. } | TrainError::Optim(_) => 4,
            },
        }
    }
}

/// Data from the configured files, else from the synthetic spec (default
/// spec when none is given).
pub fn load_dataset(config: &RunConfig) -> Result<InteractionDataset, AurError> {
    match (&config.train_path, &config.test_path) {
        (Some(train), Some(test)) => Ok(load_interactions(train, test, config.format)?),
        (None, None) => Ok(generate_synthetic(&config.synthetic.clone().unwrap_or_default())?.0),
        _ => Err(AurError::Config("train_path and test_path must be given together".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config: RunConfig,
    pub dataset_hash: String,
    pub backbone_loss_trace: Vec<f64>,
    pub uncertainty_loss_trace: Vec<f64>,
    /// Mean KL before uncertainty training.
    pub initial_kl: f64,
    /// One report per (λ in the grid, protocol).
    pub evaluations: Vec<EvalReport>,
    /// Mean coverage length per λ in the grid.
    pub coverage: Vec<LambdaCoverage>,
    /// At `config.lambda` and the first cutoff.
    pub diagnostics: DiagnosticsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCoverage {
    pub lambda: f64,
    pub mean_length: f64,
    pub num_users: usize,
}

impl PipelineReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn evaluation(&self, lambda: f64, protocol: Protocol) -> Option<&EvalReport> {
        self.evaluations
            .iter()
            .find(|r| r.lambda == lambda && r.protocol == protocol)
    }

    pub fn coverage_at(&self, lambda: f64) -> Option<&LambdaCoverage> {
        self.coverage.iter().find(|c| c.lambda == lambda)
    }
}

pub fn run_pipeline(config: &RunConfig) -> Result<PipelineReport, AurError> {
    config.validate()?;
    let dataset = load_dataset(config)?;
    let partition = compute_tail_partition(&dataset)?;

    let backbone = train_backbone(&dataset, &config.backbone_config())?;
    let expectation = backbone.model.scorer()?;
    let ucfg = config.uncertainty_config();
    let uncertainty = train_uncertainty(&dataset, &expectation.predict_all(), &ucfg)?;
    let unc_scorer = uncertainty.params.scorer(&dataset);

    let initial = UncertaintyParameters::init(dataset.num_items(), ucfg.dim, ucfg.scale_k, ucfg.activation, ucfg.seed)?;
    let initial_kl = kl_diagnostic(&expectation, &initial.scorer(&dataset), &dataset, config.workers)?.mean;

    let mut evaluations = Vec::with_capacity(config.lambda_grid.len() * Protocol::ALL.len());
    let mut coverage = Vec::with_capacity(config.lambda_grid.len());
    for &lambda in &config.lambda_grid {
        let scorer = AurScorer::new(&expectation, &unc_scorer, Blend::new(lambda)?);
        let c = mean_coverage_length(&scorer, &dataset, config.workers)?;
        coverage.push(LambdaCoverage {
            lambda,
            mean_length: c.mean_length,
            num_users: c.num_users,
        });
        for protocol in Protocol::ALL {
            evaluations.push(evaluate(
                &scorer,
                &dataset,
                &partition,
                protocol,
                lambda,
                &config.k_list,
                config.workers,
            )?);
        }
    }
    let blended = AurScorer::new(&expectation, &unc_scorer, Blend::new(config.lambda)?);
    let diagnostics = diagnose(
        &expectation,
        &unc_scorer,
        &blended,
        config.lambda,
        &dataset,
        &partition,
        config.k_list[0],
        config.workers,
    )?;
    Ok(PipelineReport {
        config: config.clone(),
        dataset_hash: dataset.content_hash().to_string(),
        backbone_loss_trace: backbone.loss_trace,
        uncertainty_loss_trace: uncertainty.loss_trace,
        initial_kl,
        evaluations,
        coverage,
        diagnostics,
    })
}
