//! Aleatoric-uncertainty estimator `σ²_ui = e^{s_ui} / K`.
//!
//! The logit is `s_ui = ⟨p_u, q_i⟩`, where `q_i` is a row of the item table
//! and the user representation is built from the training history:
//! `p_u = act((1/√|H_u|) Σ_{j∈H_u} z_j)` with `z_j` rows of a second table.

mod joint;
mod loss;
mod train;

use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::InteractionDataset;
use crate::error::TrainError;
use crate::matrix::{axpy, dot, Matrix};

pub use joint::{joint_loss, joint_loss_and_grad, train_joint, JointConfig, JointGradients, TrainedJoint};
pub use loss::{uncertainty_batch_loss, uncertainty_loss, UncertaintyGradients};
pub use train::{train_uncertainty, TrainedUncertainty, UncertaintyTrainConfig};

/// Bound applied to `s` inside every exponential.
pub const LOGIT_CLAMP: f64 = 30.0;

pub const INIT_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activated value `y = act(x)`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

#[inline]
pub(crate) fn clamp_logit(s: f64) -> f64 {
    s.clamp(-LOGIT_CLAMP, LOGIT_CLAMP)
}

/// `e^{s} / K`, with `s` clamped to `[-30, 30]`.
#[inline]
pub fn variance_from_logit(s: f64, scale_k: f64) -> f64 {
    clamp_logit(s).exp() / scale_k
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyParameters {
    /// `q_i` rows.
    item_rep_table: Matrix,
    /// `z_i` rows.
    history_table: Matrix,
    scale_k: f64,
    activation: Activation,
}

impl UncertaintyParameters {
    pub fn new(
        item_rep_table: Matrix,
        history_table: Matrix,
        scale_k: f64,
        activation: Activation,
    ) -> Result<Self, TrainError> {
        if !(scale_k > 0.0 && scale_k.is_finite()) {
            return Err(TrainError::InvalidConfig(format!("scale K must be positive, got {scale_k}")));
        }
        if item_rep_table.rows() != history_table.rows() || item_rep_table.cols() != history_table.cols() {
            return Err(TrainError::DimensionMismatch(format!(
                "item table {}×{} vs history table {}×{}",
                item_rep_table.rows(),
                item_rep_table.cols(),
                history_table.rows(),
                history_table.cols()
            )));
        }
        Ok(UncertaintyParameters {
            item_rep_table,
            history_table,
            scale_k,
            activation,
        })
    }

    /// Both tables i.i.d. normal(0, 0.01²), so initial σ² ≈ 1/K.
    pub fn init(num_items: usize, dim: usize, scale_k: f64, activation: Activation, seed: u64) -> Result<Self, TrainError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = Matrix::random_normal(num_items, dim, INIT_STD, &mut rng);
        let z = Matrix::random_normal(num_items, dim, INIT_STD, &mut rng);
        Self::new(q, z, scale_k, activation)
    }

    pub fn num_items(&self) -> usize {
        self.item_rep_table.rows()
    }

    pub fn dim(&self) -> usize {
        self.item_rep_table.cols()
    }

    pub fn scale_k(&self) -> f64 {
        self.scale_k
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn item_rep_table(&self) -> &Matrix {
        &self.item_rep_table
    }

    pub fn history_table(&self) -> &Matrix {
        &self.history_table
    }

    pub(crate) fn tables_mut(&mut self) -> (&mut Matrix, &mut Matrix) {
        (&mut self.item_rep_table, &mut self.history_table)
    }

    /// `p_u` for a training history. An empty history gives `act(0)`.
    pub fn user_representation(&self, history: &[usize]) -> Vec<f64> {
        let mut pre = vec![0.0; self.dim()];
        if !history.is_empty() {
            let c = 1.0 / (history.len() as f64).sqrt();
            for &j in history {
                axpy(c, self.history_table.row(j), &mut pre);
            }
        }
        pre.into_iter().map(|x| self.activation.apply(x)).collect()
    }

    /// `s_ui = ⟨p_u, q_i⟩` given a precomputed `p_u`.
    #[inline]
    pub fn logit_with(&self, user_rep: &[f64], item: usize) -> f64 {
        dot(user_rep, self.item_rep_table.row(item))
    }

    pub fn logit_row(&self, user_rep: &[f64]) -> Vec<f64> {
        (0..self.num_items()).map(|i| self.logit_with(user_rep, i)).collect()
    }

    pub fn uncertainty_logit(&self, dataset: &InteractionDataset, user: usize, item: usize) -> f64 {
        self.logit_with(&self.user_representation(dataset.train_items(user)), item)
    }

    pub fn uncertainty_variance(&self, dataset: &InteractionDataset, user: usize, item: usize) -> f64 {
        variance_from_logit(self.uncertainty_logit(dataset, user, item), self.scale_k)
    }

    /// Precomputes every `p_u` for fast per-user scoring.
    pub fn scorer(&self, dataset: &InteractionDataset) -> UncertaintyScorer<'_> {
        let reps = (0..dataset.num_users())
            .map(|u| self.user_representation(dataset.train_items(u)))
            .collect();
        UncertaintyScorer { params: self, reps }
    }
}

pub struct UncertaintyScorer<'a> {
    params: &'a UncertaintyParameters,
    reps: Vec<Vec<f64>>,
}

impl UncertaintyScorer<'_> {
    pub fn num_items(&self) -> usize {
        self.params.num_items()
    }

    pub fn scale_k(&self) -> f64 {
        self.params.scale_k
    }

    pub fn user_rep(&self, user: usize) -> &[f64] {
        &self.reps[user]
    }

    pub fn logit(&self, user: usize, item: usize) -> f64 {
        self.params.logit_with(&self.reps[user], item)
    }

    pub fn logit_row(&self, user: usize) -> Vec<f64> {
        self.params.logit_row(&self.reps[user])
    }

    pub fn variance_row(&self, user: usize) -> Vec<f64> {
        self.logit_row(user)
            .into_iter()
            .map(|s| variance_from_logit(s, self.params.scale_k))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(q: Vec<Vec<f64>>, z: Vec<Vec<f64>>) -> UncertaintyParameters {
        UncertaintyParameters::new(Matrix::from_rows(&q), Matrix::from_rows(&z), 1.0, Activation::Tanh).unwrap()
    }

    #[test]
    fn empty_history_is_zero() {
        let p = params(vec![vec![1.0, 2.0]], vec![vec![3.0, 4.0]]);
        assert_eq!(p.user_representation(&[]), vec![0.0, 0.0]);
    }

    #[test]
    fn zero_history_embedding_is_zero() {
        let p = params(vec![vec![1.0, 2.0]], vec![vec![0.0, 0.0]]);
        assert_eq!(p.user_representation(&[0]), vec![0.0, 0.0]);
    }

    #[test]
    fn history_sum_is_scaled_by_inverse_sqrt() {
        let v = vec![0.3, -0.2];
        let p = params(vec![vec![0.0; 2]; 2], vec![v.clone(), v.clone()]);
        let rep = p.user_representation(&[0, 1]);
        for (got, x) in rep.iter().zip(&v) {
            assert!((got - (2f64.sqrt() * x).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn logit_examples() {
        let p = params(vec![vec![0.0, 0.0], vec![2.0, 1.0], vec![1.0, -2.0]], vec![vec![0.0; 2]; 3]);
        assert_eq!(p.logit_with(&[0.7, -0.1], 0), 0.0);
        assert_eq!(p.logit_with(&[0.5, 0.25], 2), 0.0);
        assert!((p.logit_with(&[0.3, 0.4], 1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn variance_examples() {
        assert_eq!(variance_from_logit(0.0, 1.0), 1.0);
        assert_eq!(variance_from_logit(0.0, 2.0), 0.5);
        assert!((variance_from_logit(4f64.ln(), 1.0) - 4.0).abs() < 1e-14);
        assert!(variance_from_logit(0.5, 1.0) > variance_from_logit(0.4, 1.0));
        assert!(variance_from_logit(0.5, 1.0) > variance_from_logit(0.5, 1.5));
    }

    #[test]
    fn rejects_non_positive_scale() {
        for k in [0.0, -1.0, f64::NAN] {
            assert!(UncertaintyParameters::new(Matrix::zeros(1, 1), Matrix::zeros(1, 1), k, Activation::Tanh).is_err());
        }
    }

    #[test]
    fn identical_histories_give_identical_rows() {
        let ds = InteractionDataset::new(3, 6, vec![vec![1, 4], vec![1, 4], vec![2]], vec![]).unwrap();
        let p = UncertaintyParameters::init(6, 8, 1.0, Activation::Tanh, 3).unwrap();
        let scorer = p.scorer(&ds);
        assert_eq!(scorer.logit_row(0), scorer.logit_row(1));
        assert_ne!(scorer.logit_row(0), scorer.logit_row(2));
    }

    proptest! {
        #[test]
        fn variance_is_positive(seed in any::<u64>(), k in 0.01f64..100.0, std in 0.0f64..50.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = Matrix::random_normal(5, 4, std, &mut rng);
            let z = Matrix::random_normal(5, 4, std, &mut rng);
            let p = UncertaintyParameters::new(q, z, k, Activation::Tanh).unwrap();
            let ds = InteractionDataset::new(2, 5, vec![vec![0, 3], vec![]], vec![]).unwrap();
            for u in 0..2 {
                for i in 0..5 {
                    let v = p.uncertainty_variance(&ds, u, i);
                    prop_assert!(v > 0.0 && v.is_finite());
                }
            }
        }
    }
}
