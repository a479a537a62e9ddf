//! Coverage length, tail calibration, and the residual/variance diagnostics.

use serde::{Deserialize, Serialize};

use super::{check_items, map_users, EvalError};
use crate::backbone::ExpectationScorer;
use crate::data::{InteractionDataset, TailPartition};
use crate::ranking::{ranked_candidates, top_k, CandidateFilter, Scorer};
use crate::uncertainty::{clamp_logit, UncertaintyScorer};

/// Largest 1-based rank, among candidates `I ∖ H_u`, of any item in `truth`.
/// `None` for empty truth.
pub fn coverage_length(scores: &[f64], history: &[usize], truth: &[usize]) -> Option<usize> {
    if truth.is_empty() {
        return None;
    }
    let ranked = ranked_candidates(scores, history, CandidateFilter::All);
    ranked
        .iter()
        .enumerate()
        .filter(|(_, (i, _))| truth.contains(i))
        .map(|(r, _)| r + 1)
        .max()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageSummary {
    pub mean_length: f64,
    pub num_users: usize,
}

pub fn mean_coverage_length(
    scorer: &dyn Scorer,
    dataset: &InteractionDataset,
    workers: usize,
) -> Result<CoverageSummary, EvalError> {
    check_items(scorer, dataset)?;
    let lengths = map_users(dataset.num_users(), workers, |u| {
        coverage_length(&scorer.score_row(u), dataset.train_items(u), dataset.test_items(u))
    })?;
    let lengths: Vec<usize> = lengths.into_iter().flatten().collect();
    if lengths.is_empty() {
        return Err(EvalError::NoUsers("coverage length"));
    }
    Ok(CoverageSummary {
        mean_length: lengths.iter().sum::<usize>() as f64 / lengths.len() as f64,
        num_users: lengths.len(),
    })
}

/// At least 60% of `history` is tail. An empty history is head-focus.
pub fn is_tail_focus(history: &[usize], partition: &TailPartition) -> bool {
    let tail = history.iter().filter(|&&i| partition.is_tail(i)).count();
    !history.is_empty() && 5 * tail >= 3 * history.len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub k: usize,
    /// Tail share of all top-K slots for the group; `None` if the group is
    /// empty or received no recommendations.
    pub tail_focus_ratio: Option<f64>,
    pub head_focus_ratio: Option<f64>,
    pub tail_focus_users: usize,
    pub head_focus_users: usize,
}

pub fn tail_ratio_calibration(
    scorer: &dyn Scorer,
    dataset: &InteractionDataset,
    partition: &TailPartition,
    k: usize,
    workers: usize,
) -> Result<CalibrationReport, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidCutoffs);
    }
    check_items(scorer, dataset)?;
    let per_user = map_users(dataset.num_users(), workers, |u| {
        let history = dataset.train_items(u);
        let row = top_k(&scorer.score_row(u), history, k, CandidateFilter::All).expect("k >= 1");
        let tail = row.items.iter().filter(|(i, _)| partition.is_tail(*i)).count();
        (is_tail_focus(history, partition), tail, row.items.len())
    })?;
    // [users, tail slots, slots] per group
    let mut groups = [[0usize; 3]; 2];
    for (focus, tail, len) in per_user {
        let g = &mut groups[usize::from(focus)];
        g[0] += 1;
        g[1] += tail;
        g[2] += len;
    }
    let ratio = |g: [usize; 3]| (g[2] > 0).then(|| g[1] as f64 / g[2] as f64);
    Ok(CalibrationReport {
        k,
        tail_focus_ratio: ratio(groups[1]),
        head_focus_ratio: ratio(groups[0]),
        tail_focus_users: groups[1][0],
        head_focus_users: groups[0][0],
    })
}

/// Sample Pearson coefficient; `None` when either series is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// `KL(p ‖ q)` with `p ∝ Δ²` and `q = softmax(s)`; `None` when every
/// residual is zero.
pub fn kl_divergence(residual_sq: &[f64], logits: &[f64]) -> Option<f64> {
    assert_eq!(residual_sq.len(), logits.len());
    let total: f64 = residual_sq.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    let kl: f64 = residual_sq
        .iter()
        .zip(logits)
        .filter(|(&d, _)| d > 0.0)
        .map(|(&d, &s)| {
            let p = d / total;
            p * (p.ln() - (s - lse))
        })
        .sum();
    Some(kl.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub mean: f64,
    pub num_users: usize,
    pub num_users_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlSummary {
    pub mean: f64,
    pub num_users: usize,
    pub num_users_skipped: usize,
}

fn mean_of(values: Vec<Option<f64>>, what: &'static str) -> Result<(f64, usize, usize), EvalError> {
    let total = values.len();
    let kept: Vec<f64> = values.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(EvalError::NoUsers(what));
    }
    Ok((kept.iter().sum::<f64>() / kept.len() as f64, kept.len(), total - kept.len()))
}

/// Mean per-user Pearson(r², σ²) over all items.
pub fn correlation_diagnostic(
    expectation: &ExpectationScorer,
    uncertainty: &UncertaintyScorer<'_>,
    dataset: &InteractionDataset,
    workers: usize,
) -> Result<CorrelationSummary, EvalError> {
    check_items(expectation, dataset)?;
    let per_user = map_users(dataset.num_users(), workers, |u| {
        let r2: Vec<f64> = expectation.predict_row(u).iter().map(|r| r * r).collect();
        pearson(&r2, &uncertainty.variance_row(u))
    })?;
    let (mean, num_users, num_users_skipped) = mean_of(per_user, "correlation")?;
    Ok(CorrelationSummary {
        mean,
        num_users,
        num_users_skipped,
    })
}

/// Mean per-user `KL(p_u ‖ q_u)` with `Δ_ui = Y_ui − r_ui` over all items.
pub fn kl_diagnostic(
    expectation: &ExpectationScorer,
    uncertainty: &UncertaintyScorer<'_>,
    dataset: &InteractionDataset,
    workers: usize,
) -> Result<KlSummary, EvalError> {
    check_items(expectation, dataset)?;
    let per_user = map_users(dataset.num_users(), workers, |u| {
        let r = expectation.predict_row(u);
        let labels = dataset.label_row(u);
        let d2: Vec<f64> = labels.iter().zip(&r).map(|(y, r)| (y - r) * (y - r)).collect();
        let s: Vec<f64> = uncertainty.logit_row(u).into_iter().map(clamp_logit).collect();
        kl_divergence(&d2, &s)
    })?;
    let (mean, num_users, num_users_skipped) = mean_of(per_user, "KL divergence")?;
    Ok(KlSummary {
        mean,
        num_users,
        num_users_skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub lambda: f64,
    pub correlation: CorrelationSummary,
    pub kl: KlSummary,
    pub coverage: CoverageSummary,
    pub calibration: CalibrationReport,
}

/// All diagnostics; coverage and calibration rank by `blended`.
pub fn diagnose(
    expectation: &ExpectationScorer,
    uncertainty: &UncertaintyScorer<'_>,
    blended: &dyn Scorer,
    lambda: f64,
    dataset: &InteractionDataset,
    partition: &TailPartition,
    k: usize,
    workers: usize,
) -> Result<DiagnosticsReport, EvalError> {
    Ok(DiagnosticsReport {
        lambda,
        correlation: correlation_diagnostic(expectation, uncertainty, dataset, workers)?,
        kl: kl_diagnostic(expectation, uncertainty, dataset, workers)?,
        coverage: mean_coverage_length(blended, dataset, workers)?,
        calibration: tail_ratio_calibration(blended, dataset, partition, k, workers)?,
    })
}
