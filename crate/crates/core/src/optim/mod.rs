//! Adam and finite-difference gradient verification.

mod adam;
mod gradcheck;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{finite_diff_check, GradCheckConfig, GradCheckReport};

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient {value} at index {index}")]
    NonFiniteGradient { index: usize, value: f64 },
    #[error("gradient has {got} entries, parameters have {expected}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("loss is non-finite ({value}) at perturbed coordinate {index}")]
    NonFiniteLoss { index: usize, value: f64 },
    #[error("invalid optimizer setting: {0}")]
    InvalidConfig(String),
}
