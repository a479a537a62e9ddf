use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sampling::{derive_seed, sample_negative_weights, validate_rate, NegativeWeightPlan};
use super::{Backbone, ModelKind};
use crate::data::InteractionDataset;
use crate::error::TrainError;
use crate::matrix::{axpy, dot, Matrix};
use crate::optim::{AdamConfig, AdamState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub kind: ModelKind,
    pub dim: usize,
    pub num_layers: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// L2 coefficient on every parameter.
    pub reg: f64,
    /// Bernoulli rate for keeping a negative.
    pub negative_rate: f64,
    pub seed: u64,
    /// Stop once the epoch loss changed by less than 1e-5 (relative) over
    /// the last 10 epochs.
    pub early_stop: bool,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig {
            kind: ModelKind::Mf,
            dim: 128,
            num_layers: 3,
            learning_rate: 1e-4,
            batch_size: 32,
            epochs: 100,
            reg: 1e-3,
            negative_rate: 0.1,
            seed: 0,
            early_stop: false,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        validate_rate(self.negative_rate)?;
        AdamConfig::with_learning_rate(self.learning_rate).validate()?;
        if self.dim == 0 || self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("dim and batch size must be positive".into()));
        }
        if !(self.reg >= 0.0 && self.reg.is_finite()) {
            return Err(TrainError::InvalidConfig(format!("L2 coefficient must be non-negative, got {}", self.reg)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedBackbone {
    pub model: Backbone,
    /// Mean batch loss per epoch.
    pub loss_trace: Vec<f64>,
}

/// Visits every weighted `(user, item, label)` term of a plan.
fn for_each_term(dataset: &InteractionDataset, plan: &NegativeWeightPlan, mut f: impl FnMut(usize, usize, f64)) {
    for (u, negatives) in &plan.users {
        for &i in dataset.train_items(*u) {
            f(*u, i, 1.0);
        }
        for &i in negatives {
            f(*u, i, 0.0);
        }
    }
}

fn count_terms(dataset: &InteractionDataset, plan: &NegativeWeightPlan) -> usize {
    plan.users
        .iter()
        .map(|(u, neg)| dataset.train_items(*u).len() + neg.len())
        .sum()
}

/// Weighted squared error over the plan's terms, averaged, plus `reg·‖θ‖²`.
pub fn backbone_loss(
    model: &Backbone,
    dataset: &InteractionDataset,
    plan: &NegativeWeightPlan,
    reg: f64,
) -> Result<f64, TrainError> {
    let emb = model.final_embeddings()?;
    let m = dataset.num_users();
    let terms = count_terms(dataset, plan);
    let mut sum = 0.0;
    let mut bad = None;
    for_each_term(dataset, plan, |u, i, y| {
        let r = dot(emb.row(u), emb.row(m + i));
        if !r.is_finite() && bad.is_none() {
            bad = Some((u, i));
        }
        sum += 0.5 * (r - y) * (r - y);
    });
    if let Some((user, item)) = bad {
        return Err(TrainError::NonFinitePrediction { user, item });
    }
    let data = if terms == 0 { 0.0 } else { sum / terms as f64 };
    Ok(data + reg * model.parameters().squared_norm())
}

/// Loss and its gradient with respect to θ.
pub fn backbone_loss_and_grad(
    model: &Backbone,
    dataset: &InteractionDataset,
    plan: &NegativeWeightPlan,
    reg: f64,
) -> Result<(f64, Matrix), TrainError> {
    let emb = model.final_embeddings()?;
    let m = dataset.num_users();
    let terms = count_terms(dataset, plan);
    let norm = if terms == 0 { 0.0 } else { 1.0 / terms as f64 };
    let mut grad = Matrix::zeros(emb.rows(), emb.cols());
    let mut sum = 0.0;
    let mut bad = None;
    for_each_term(dataset, plan, |u, i, y| {
        let r = dot(emb.row(u), emb.row(m + i));
        if !r.is_finite() && bad.is_none() {
            bad = Some((u, i));
        }
        sum += 0.5 * (r - y) * (r - y);
        let dr = (r - y) * norm;
        axpy(dr, emb.row(m + i), grad.row_mut(u));
        axpy(dr, emb.row(u), grad.row_mut(m + i));
    });
    if let Some((user, item)) = bad {
        return Err(TrainError::NonFinitePrediction { user, item });
    }
    let mut grad = model.pull_back(grad)?;
    let theta = model.parameters();
    grad.add_scaled(theta, 2.0 * reg);
    Ok((sum * norm + reg * theta.squared_norm(), grad))
}

/// User-batched Adam on the weighted MSE objective with fresh negatives
/// every epoch.
pub fn train_backbone(dataset: &InteractionDataset, config: &BackboneConfig) -> Result<TrainedBackbone, TrainError> {
    config.validate()?;
    let mut model = Backbone::init(dataset, config.kind, config.dim, config.num_layers, config.seed);
    let mut adam = AdamState::new(
        model.parameters().as_slice().len(),
        AdamConfig::with_learning_rate(config.learning_rate),
    );
    let mut users: Vec<usize> = (0..dataset.num_users()).collect();
    let mut loss_trace = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0xBA7C, epoch as u64]));
        users.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for batch in users.chunks(config.batch_size) {
            let plan = sample_negative_weights(dataset, batch, config.negative_rate, config.seed, epoch as u64)?;
            let (loss, grad) = match backbone_loss_and_grad(&model, dataset, &plan, config.reg) {
                Ok(v) => v,
                Err(TrainError::NonFinitePrediction { .. }) => (f64::NAN, Matrix::zeros(0, 0)),
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    stage: "backbone",
                    epoch,
                    loss,
                });
            }
            adam.step(model.parameters_mut().as_mut_slice(), grad.as_slice())?;
            total += loss;
            batches += 1;
        }
        let mean = if batches == 0 { 0.0 } else { total / batches as f64 };
        if !mean.is_finite() || !model.parameters().is_finite() {
            return Err(TrainError::Diverged {
                stage: "backbone",
                epoch,
                loss: mean,
            });
        }
        loss_trace.push(mean);
        if config.early_stop && converged(&loss_trace) {
            break;
        }
    }
    Ok(TrainedBackbone { model, loss_trace })
}

pub(crate) fn converged(trace: &[f64]) -> bool {
    const WINDOW: usize = 10;
    if trace.len() <= WINDOW {
        return false;
    }
    let now = trace[trace.len() - 1];
    let before = trace[trace.len() - 1 - WINDOW];
    (now - before).abs() <= 1e-5 * before.abs()
}
