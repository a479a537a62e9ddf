//! Aleatoric uncertainty-aware recommendation.
//!
//! An expectation model (matrix factorization or LightGCN) is trained with a
//! weighted squared loss, then a second model learns a per-pair variance
//! `σ² = e^{s}/K` from the residuals. Ranking blends the two as
//! `λ·r + (1 − λ)·σ`.

pub mod backbone;
pub mod checkpoint;
pub mod config;
pub mod data;
mod error;
pub mod eval;
pub mod matrix;
pub mod optim;
pub mod pipeline;
pub mod ranking;
pub mod uncertainty;

pub use error::TrainError;
