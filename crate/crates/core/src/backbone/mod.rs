//! Expectation estimators `r_ui = f_θ(u, i)` and their weighted-MSE training.
//!
//! Two models share one parameter layout: a `(m + n) × d` table whose first
//! `m` rows are user embeddings and last `n` rows item embeddings. Matrix
//! factorization scores with these rows directly; LightGCN first smooths the
//! table over the normalized interaction graph.

mod lightgcn;
mod sampling;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::InteractionDataset;
use crate::error::TrainError;
use crate::matrix::{dot, Matrix};

pub use lightgcn::NormalizedAdjacency;
pub use sampling::{derive_seed, sample_negative_weights, validate_rate, NegativeWeightPlan};
pub(crate) use train::converged as train_converged;
pub use train::{
    backbone_loss, backbone_loss_and_grad, train_backbone, BackboneConfig, TrainedBackbone,
};

/// Standard deviation of the embedding initialization.
pub const INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Mf,
    LightGcn,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Mf => "mf",
            ModelKind::LightGcn => "lightgcn",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mf" => Ok(ModelKind::Mf),
            "lightgcn" | "lgcn" => Ok(ModelKind::LightGcn),
            other => Err(format!("unknown model kind `{other}` (expected mf or lightgcn)")),
        }
    }
}

/// Matrix factorization: `r_ui = ⟨p_u, q_i⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfParameters {
    num_users: usize,
    embeddings: Matrix,
}

impl MfParameters {
    pub fn new(user_embeddings: &Matrix, item_embeddings: &Matrix) -> Self {
        assert_eq!(user_embeddings.cols(), item_embeddings.cols());
        let mut data = user_embeddings.as_slice().to_vec();
        data.extend_from_slice(item_embeddings.as_slice());
        MfParameters {
            num_users: user_embeddings.rows(),
            embeddings: Matrix::from_vec(
                user_embeddings.rows() + item_embeddings.rows(),
                user_embeddings.cols(),
                data,
            ),
        }
    }

    pub fn user(&self, u: usize) -> &[f64] {
        self.embeddings.row(u)
    }

    pub fn item(&self, i: usize) -> &[f64] {
        self.embeddings.row(self.num_users + i)
    }

    pub fn user_mut(&mut self, u: usize) -> &mut [f64] {
        self.embeddings.row_mut(u)
    }
}

pub fn mf_predict(params: &MfParameters, user: usize, item: usize) -> f64 {
    dot(params.user(user), params.item(item))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LightGcnParameters {
    base_embeddings: Matrix,
    num_layers: usize,
    adjacency: NormalizedAdjacency,
}

impl LightGcnParameters {
    pub fn new(base_embeddings: Matrix, num_layers: usize, adjacency: NormalizedAdjacency) -> Result<Self, TrainError> {
        if base_embeddings.rows() != adjacency.num_nodes() {
            return Err(TrainError::DimensionMismatch(format!(
                "{} base rows for {} graph nodes",
                base_embeddings.rows(),
                adjacency.num_nodes()
            )));
        }
        Ok(LightGcnParameters {
            base_embeddings,
            num_layers,
            adjacency,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn adjacency(&self) -> &NormalizedAdjacency {
        &self.adjacency
    }
}

/// Final (propagated) embeddings `[users; items]`.
pub fn lightgcn_forward(params: &LightGcnParameters) -> Result<Matrix, TrainError> {
    params.adjacency.layer_mean(&params.base_embeddings, params.num_layers)
}

/// A trained or freshly initialized expectation model.
#[derive(Debug, Clone, PartialEq)]
pub enum Backbone {
    Mf(MfParameters),
    LightGcn(LightGcnParameters),
}

impl Backbone {
    /// Normal(0, 0.1²) initialization from `seed`.
    pub fn init(dataset: &InteractionDataset, kind: ModelKind, dim: usize, num_layers: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (m, n) = (dataset.num_users(), dataset.num_items());
        let table = Matrix::random_normal(m + n, dim, INIT_STD, &mut rng);
        Self::from_table(dataset, kind, table, num_layers).expect("table shaped from the dataset")
    }

    /// Wraps a `(m + n) × d` parameter table; LightGCN rebuilds its
    /// adjacency from `dataset`.
    pub fn from_table(
        dataset: &InteractionDataset,
        kind: ModelKind,
        table: Matrix,
        num_layers: usize,
    ) -> Result<Self, TrainError> {
        let nodes = dataset.num_users() + dataset.num_items();
        if table.rows() != nodes {
            return Err(TrainError::DimensionMismatch(format!(
                "parameter table has {} rows, dataset has {nodes} users+items",
                table.rows()
            )));
        }
        Ok(match kind {
            ModelKind::Mf => Backbone::Mf(MfParameters {
                num_users: dataset.num_users(),
                embeddings: table,
            }),
            ModelKind::LightGcn => Backbone::LightGcn(LightGcnParameters::new(
                table,
                num_layers,
                NormalizedAdjacency::from_dataset(dataset),
            )?),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Backbone::Mf(_) => ModelKind::Mf,
            Backbone::LightGcn(_) => ModelKind::LightGcn,
        }
    }

    pub fn num_users(&self) -> usize {
        match self {
            Backbone::Mf(p) => p.num_users,
            Backbone::LightGcn(p) => p.adjacency.num_users(),
        }
    }

    pub fn num_layers(&self) -> usize {
        match self {
            Backbone::Mf(_) => 0,
            Backbone::LightGcn(p) => p.num_layers,
        }
    }

    pub fn dim(&self) -> usize {
        self.parameters().cols()
    }

    /// Trainable table θ.
    pub fn parameters(&self) -> &Matrix {
        match self {
            Backbone::Mf(p) => &p.embeddings,
            Backbone::LightGcn(p) => &p.base_embeddings,
        }
    }

    pub fn parameters_mut(&mut self) -> &mut Matrix {
        match self {
            Backbone::Mf(p) => &mut p.embeddings,
            Backbone::LightGcn(p) => &mut p.base_embeddings,
        }
    }

    /// Embeddings the inner product is taken over.
    pub fn final_embeddings(&self) -> Result<Matrix, TrainError> {
        match self {
            Backbone::Mf(p) => Ok(p.embeddings.clone()),
            Backbone::LightGcn(p) => lightgcn_forward(p),
        }
    }

    /// Maps a gradient w.r.t. final embeddings to one w.r.t. θ.
    pub(crate) fn pull_back(&self, grad_final: Matrix) -> Result<Matrix, TrainError> {
        match self {
            Backbone::Mf(_) => Ok(grad_final),
            Backbone::LightGcn(p) => p.adjacency.layer_mean(&grad_final, p.num_layers),
        }
    }

    pub fn scorer(&self) -> Result<ExpectationScorer, TrainError> {
        Ok(ExpectationScorer {
            num_users: self.num_users(),
            embeddings: self.final_embeddings()?,
        })
    }
}

/// Frozen final embeddings for fast `r_ui` evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationScorer {
    num_users: usize,
    embeddings: Matrix,
}

impl ExpectationScorer {
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.embeddings.rows() - self.num_users
    }

    #[inline]
    pub fn predict(&self, user: usize, item: usize) -> f64 {
        dot(self.embeddings.row(user), self.embeddings.row(self.num_users + item))
    }

    pub fn predict_row(&self, user: usize) -> Vec<f64> {
        (0..self.num_items()).map(|i| self.predict(user, i)).collect()
    }

    /// Dense `m × n` prediction matrix.
    pub fn predict_all(&self) -> Matrix {
        let n = self.num_items();
        let mut out = Matrix::zeros(self.num_users, n);
        for u in 0..self.num_users {
            out.row_mut(u).copy_from_slice(&self.predict_row(u));
        }
        out
    }
}
