use thiserror::Error;

use crate::data::DataError;
use crate::optim::OptimError;

/// Failures while fitting a model.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("{stage} training diverged at epoch {epoch}: loss = {loss}")]
    Diverged {
        stage: &'static str,
        epoch: usize,
        loss: f64,
    },
    #[error("non-finite prediction for user {user}, item {item}")]
    NonFinitePrediction { user: usize, item: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error(transparent)]
    Data(#[from] DataError),
}
