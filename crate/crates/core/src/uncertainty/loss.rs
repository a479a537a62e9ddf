use super::{clamp_logit, UncertaintyParameters, LOGIT_CLAMP};
use crate::data::InteractionDataset;
use crate::error::TrainError;
use crate::matrix::{axpy, Matrix};

/// One term `w(Δ²e^{−s} + βs + γs²)` and its derivative in `s`.
#[inline]
pub(crate) fn term_and_slope(delta: f64, s: f64, w: f64, beta: f64, gamma: f64) -> (f64, f64) {
    let e = (-clamp_logit(s)).exp();
    let d2 = delta * delta;
    let value = w * (d2 * e + beta * s + gamma * s * s);
    let exp_slope = if s.abs() < LOGIT_CLAMP { -d2 * e } else { 0.0 };
    (value, w * (exp_slope + beta + 2.0 * gamma * s))
}

/// Mean of `w(Δ²e^{−s} + βs + γs²)` over the given terms.
pub fn uncertainty_loss(
    residuals: &[f64],
    logits: &[f64],
    weights: &[f64],
    beta: f64,
    gamma: f64,
) -> Result<f64, TrainError> {
    if residuals.len() != logits.len() || logits.len() != weights.len() {
        return Err(TrainError::DimensionMismatch(format!(
            "{} residuals, {} logits, {} weights",
            residuals.len(),
            logits.len(),
            weights.len()
        )));
    }
    if residuals.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for ((&d, &s), &w) in residuals.iter().zip(logits).zip(weights) {
        let (v, _) = term_and_slope(d, s, w, beta, gamma);
        if !v.is_finite() {
            return Err(TrainError::InvalidConfig(format!(
                "non-finite uncertainty term for residual {d}, logit {s}, weight {w}"
            )));
        }
        sum += v;
    }
    Ok(sum / residuals.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyGradients {
    pub item_rep: Matrix,
    pub history: Matrix,
}

/// Fixed-weight objective over `batch × items` with frozen expectations.
///
/// `expectations` is the dense `m × n` matrix of `r_ui`. Positives weigh
/// `alpha`, everything else 1. `items = None` means all items.
#[allow(clippy::too_many_arguments)]
pub fn uncertainty_batch_loss(
    params: &UncertaintyParameters,
    dataset: &InteractionDataset,
    expectations: &Matrix,
    batch: &[usize],
    items: Option<&[usize]>,
    alpha: f64,
    beta: f64,
    gamma: f64,
    with_grad: bool,
) -> (f64, Option<UncertaintyGradients>) {
    let n = params.num_items();
    let dim = params.dim();
    let all: Vec<usize>;
    let items = match items {
        Some(items) => items,
        None => {
            all = (0..n).collect();
            &all
        }
    };
    let terms = batch.len() * items.len();
    if terms == 0 {
        return (0.0, with_grad.then(|| zero_grads(params)));
    }
    let norm = 1.0 / terms as f64;
    let mut grads = with_grad.then(|| zero_grads(params));
    let mut sum = 0.0;
    let mut dp = vec![0.0; dim];

    for &u in batch {
        let history = dataset.train_items(u);
        let labels = dataset.label_row(u);
        let rep = params.user_representation(history);
        let r = expectations.row(u);
        dp.iter_mut().for_each(|x| *x = 0.0);
        for &i in items {
            let y = labels[i];
            let w = if y > 0.0 { alpha } else { 1.0 };
            let s = params.logit_with(&rep, i);
            let (v, slope) = term_and_slope(r[i] - y, s, w, beta, gamma);
            sum += v;
            if let Some(g) = grads.as_mut() {
                let g_s = slope * norm;
                axpy(g_s, &rep, g.item_rep.row_mut(i));
                axpy(g_s, params.item_rep_table.row(i), &mut dp);
            }
        }
        if let Some(g) = grads.as_mut() {
            if history.is_empty() {
                continue;
            }
            let c = 1.0 / (history.len() as f64).sqrt();
            let dpre: Vec<f64> = dp
                .iter()
                .zip(&rep)
                .map(|(d, &y)| d * params.activation.derivative_from_output(y) * c)
                .collect();
            for &j in history {
                axpy(1.0, &dpre, g.history.row_mut(j));
            }
        }
    }
    (sum * norm, grads)
}

fn zero_grads(params: &UncertaintyParameters) -> UncertaintyGradients {
    UncertaintyGradients {
        item_rep: Matrix::zeros(params.num_items(), params.dim()),
        history: Matrix::zeros(params.num_items(), params.dim()),
    }
}
