use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::uncertainty_batch_loss;
use super::{Activation, UncertaintyParameters};
use crate::backbone::derive_seed;
use crate::backbone::train_converged;
use crate::data::InteractionDataset;
use crate::error::TrainError;
use crate::matrix::Matrix;
use crate::optim::{AdamConfig, AdamState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyTrainConfig {
    pub dim: usize,
    pub scale_k: f64,
    pub activation: Activation,
    /// Weight on positive pairs (tail-controlling coefficient).
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Score only this many random items per batch instead of all of them.
    pub item_subsample: Option<usize>,
    pub early_stop: bool,
}

impl Default for UncertaintyTrainConfig {
    fn default() -> Self {
        UncertaintyTrainConfig {
            dim: 1024,
            scale_k: 1.0,
            activation: Activation::Tanh,
            alpha: 1.0,
            beta: 1e-2,
            gamma: 1e-3,
            epochs: 100,
            learning_rate: 1e-4,
            batch_size: 32,
            seed: 0,
            item_subsample: None,
            early_stop: false,
        }
    }
}

impl UncertaintyTrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if !(self.alpha >= 1.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be >= 1, got {}", self.alpha));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if !(self.scale_k > 0.0 && self.scale_k.is_finite()) {
            return bad(format!("scale K must be > 0, got {}", self.scale_k));
        }
        if self.dim == 0 || self.batch_size == 0 || self.item_subsample == Some(0) {
            return bad("dim, batch size and item subsample must be positive".into());
        }
        AdamConfig::with_learning_rate(self.learning_rate).validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedUncertainty {
    pub params: UncertaintyParameters,
    pub loss_trace: Vec<f64>,
}

/// Fits the uncertainty estimator against frozen expectations (`m × n`).
pub fn train_uncertainty(
    dataset: &InteractionDataset,
    expectations: &Matrix,
    config: &UncertaintyTrainConfig,
) -> Result<TrainedUncertainty, TrainError> {
    config.validate()?;
    if expectations.rows() != dataset.num_users() || expectations.cols() != dataset.num_items() {
        return Err(TrainError::DimensionMismatch(format!(
            "expectations are {}×{}, dataset is {}×{}",
            expectations.rows(),
            expectations.cols(),
            dataset.num_users(),
            dataset.num_items()
        )));
    }
    let n = dataset.num_items();
    let mut params = UncertaintyParameters::init(n, config.dim, config.scale_k, config.activation, config.seed)?;
    let adam = AdamConfig::with_learning_rate(config.learning_rate);
    let mut adam_q = AdamState::new(n * config.dim, adam);
    let mut adam_z = AdamState::new(n * config.dim, adam);

    let mut users: Vec<usize> = (0..dataset.num_users()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0x5167, epoch as u64]));
        users.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for batch in users.chunks(config.batch_size) {
            let subsample = config.item_subsample.filter(|&k| k < n).map(|k| {
                let mut idx = index::sample(&mut rng, n, k).into_vec();
                idx.sort_unstable();
                idx
            });
            let (loss, grads) = uncertainty_batch_loss(
                &params,
                dataset,
                expectations,
                batch,
                subsample.as_deref(),
                config.alpha,
                config.beta,
                config.gamma,
                true,
            );
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    stage: "uncertainty",
                    epoch,
                    loss,
                });
            }
            let grads = grads.expect("gradients requested");
            let (q, z) = params.tables_mut();
            adam_q.step(q.as_mut_slice(), grads.item_rep.as_slice())?;
            adam_z.step(z.as_mut_slice(), grads.history.as_slice())?;
            total += loss;
            batches += 1;
        }
        let mean = if batches == 0 { 0.0 } else { total / batches as f64 };
        if !mean.is_finite() || !params.item_rep_table().is_finite() || !params.history_table().is_finite() {
            return Err(TrainError::Diverged {
                stage: "uncertainty",
                epoch,
                loss: mean,
            });
        }
        loss_trace.push(mean);
        if config.early_stop && train_converged(&loss_trace) {
            break;
        }
    }
    Ok(TrainedUncertainty { params, loss_trace })
}
