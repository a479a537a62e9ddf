//! Joint objective: both estimators updated together on the Gaussian
//! negative log-likelihood of the sampled terms,
//! `Δ²/((2/K)e^{s}) + s/2 + γs²`, averaged, plus `λ‖θ‖²`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{clamp_logit, UncertaintyParameters, UncertaintyTrainConfig, LOGIT_CLAMP};
use crate::backbone::{
    derive_seed, sample_negative_weights, Backbone, BackboneConfig, NegativeWeightPlan,
};
use crate::data::InteractionDataset;
use crate::error::TrainError;
use crate::matrix::{axpy, dot, Matrix};
use crate::optim::{AdamConfig, AdamState};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JointConfig {
    /// Model shape, sampling rate, L2, learning rate, epochs, batch and seed.
    pub backbone: BackboneConfig,
    /// Uncertainty shape, `K` and `γ`. Its epochs and learning rate are ignored.
    pub uncertainty: UncertaintyTrainConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointGradients {
    pub backbone: Matrix,
    pub item_rep: Matrix,
    pub history: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedJoint {
    pub backbone: Backbone,
    pub uncertainty: UncertaintyParameters,
    pub loss_trace: Vec<f64>,
}

fn evaluate(
    backbone: &Backbone,
    unc: &UncertaintyParameters,
    dataset: &InteractionDataset,
    plan: &NegativeWeightPlan,
    reg: f64,
    gamma: f64,
    with_grad: bool,
) -> Result<(f64, Option<JointGradients>), TrainError> {
    let emb = backbone.final_embeddings()?;
    let m = dataset.num_users();
    let k = unc.scale_k();
    let terms: usize = plan
        .users
        .iter()
        .map(|(u, neg)| dataset.train_items(*u).len() + neg.len())
        .sum();
    let norm = if terms == 0 { 0.0 } else { 1.0 / terms as f64 };

    let mut grad_final = with_grad.then(|| Matrix::zeros(emb.rows(), emb.cols()));
    let mut grad_q = with_grad.then(|| Matrix::zeros(unc.num_items(), unc.dim()));
    let mut grad_z = with_grad.then(|| Matrix::zeros(unc.num_items(), unc.dim()));
    let mut sum = 0.0;
    let mut dp = vec![0.0; unc.dim()];

    for (u, negatives) in &plan.users {
        let u = *u;
        let history = dataset.train_items(u);
        let rep = unc.user_representation(history);
        dp.iter_mut().for_each(|x| *x = 0.0);
        let positives = history.iter().map(|&i| (i, 1.0));
        for (i, y) in positives.chain(negatives.iter().map(|&i| (i, 0.0))) {
            let r = dot(emb.row(u), emb.row(m + i));
            if !r.is_finite() {
                return Err(TrainError::NonFinitePrediction { user: u, item: i });
            }
            let s = dot(&rep, unc.item_rep_table.row(i));
            let e = (-clamp_logit(s)).exp();
            let delta = r - y;
            sum += 0.5 * k * delta * delta * e + 0.5 * s + gamma * s * s;
            if let (Some(gf), Some(gq)) = (grad_final.as_mut(), grad_q.as_mut()) {
                let dr = k * delta * e * norm;
                axpy(dr, emb.row(m + i), gf.row_mut(u));
                axpy(dr, emb.row(u), gf.row_mut(m + i));
                let exp_slope = if s.abs() < LOGIT_CLAMP { -0.5 * k * delta * delta * e } else { 0.0 };
                let ds = (exp_slope + 0.5 + 2.0 * gamma * s) * norm;
                axpy(ds, &rep, gq.row_mut(i));
                axpy(ds, unc.item_rep_table.row(i), &mut dp);
            }
        }
        if let Some(gz) = grad_z.as_mut() {
            if !history.is_empty() {
                let c = 1.0 / (history.len() as f64).sqrt();
                let dpre: Vec<f64> = dp
                    .iter()
                    .zip(&rep)
                    .map(|(d, &y)| d * unc.activation.derivative_from_output(y) * c)
                    .collect();
                for &j in history {
                    axpy(1.0, &dpre, gz.row_mut(j));
                }
            }
        }
    }

    let theta = backbone.parameters();
    let data = if terms == 0 { 0.0 } else { sum / terms as f64 };
    let loss = data + reg * theta.squared_norm();
    let grads = match (grad_final, grad_q, grad_z) {
        (Some(gf), Some(item_rep), Some(history)) => {
            let mut gb = backbone.pull_back(gf)?;
            gb.add_scaled(theta, 2.0 * reg);
            Some(JointGradients {
                backbone: gb,
                item_rep,
                history,
            })
        }
        _ => None,
    };
    Ok((loss, grads))
}

/// Mean joint negative log-likelihood over the plan's terms plus
/// `reg·‖θ‖²`; the `γs²` prior is included per term.
pub fn joint_loss(
    backbone: &Backbone,
    unc: &UncertaintyParameters,
    dataset: &InteractionDataset,
    plan: &NegativeWeightPlan,
    reg: f64,
    gamma: f64,
) -> Result<f64, TrainError> {
    evaluate(backbone, unc, dataset, plan, reg, gamma, false).map(|(l, _)| l)
}

pub fn joint_loss_and_grad(
    backbone: &Backbone,
    unc: &UncertaintyParameters,
    dataset: &InteractionDataset,
    plan: &NegativeWeightPlan,
    reg: f64,
    gamma: f64,
) -> Result<(f64, JointGradients), TrainError> {
    let (loss, grads) = evaluate(backbone, unc, dataset, plan, reg, gamma, true)?;
    Ok((loss, grads.expect("gradients requested")))
}

/// Trains both estimators simultaneously with Bernoulli-sampled negatives.
pub fn train_joint(dataset: &InteractionDataset, config: &JointConfig) -> Result<TrainedJoint, TrainError> {
    let bc = &config.backbone;
    let uc = &config.uncertainty;
    bc.validate()?;
    uc.validate()?;
    let mut backbone = Backbone::init(dataset, bc.kind, bc.dim, bc.num_layers, bc.seed);
    let mut unc = UncertaintyParameters::init(dataset.num_items(), uc.dim, uc.scale_k, uc.activation, uc.seed)?;
    let adam = AdamConfig::with_learning_rate(bc.learning_rate);
    let mut adam_b = AdamState::new(backbone.parameters().as_slice().len(), adam);
    let mut adam_q = AdamState::new(unc.num_items() * unc.dim(), adam);
    let mut adam_z = AdamState::new(unc.num_items() * unc.dim(), adam);

    let mut users: Vec<usize> = (0..dataset.num_users()).collect();
    let mut loss_trace = Vec::with_capacity(bc.epochs);
    for epoch in 0..bc.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(bc.seed, &[0x7017, epoch as u64]));
        users.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for batch in users.chunks(bc.batch_size) {
            let plan = sample_negative_weights(dataset, batch, bc.negative_rate, bc.seed, epoch as u64)?;
            let (loss, grads) = match joint_loss_and_grad(&backbone, &unc, dataset, &plan, bc.reg, uc.gamma) {
                Ok(v) => v,
                Err(TrainError::NonFinitePrediction { .. }) => {
                    return Err(TrainError::Diverged {
                        stage: "joint",
                        epoch,
                        loss: f64::NAN,
                    })
                }
                Err(e) => return Err(e),
            };
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    stage: "joint",
                    epoch,
                    loss,
                });
            }
            adam_b.step(backbone.parameters_mut().as_mut_slice(), grads.backbone.as_slice())?;
            let (q, z) = unc.tables_mut();
            adam_q.step(q.as_mut_slice(), grads.item_rep.as_slice())?;
            adam_z.step(z.as_mut_slice(), grads.history.as_slice())?;
            total += loss;
            batches += 1;
        }
        loss_trace.push(if batches == 0 { 0.0 } else { total / batches as f64 });
    }
    Ok(TrainedJoint {
        backbone,
        uncertainty: unc,
        loss_trace,
    })
}
