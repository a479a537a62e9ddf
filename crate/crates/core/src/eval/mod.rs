//! Top-K metrics under the three evaluation protocols, plus diagnostics.

mod diagnostics;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{InteractionDataset, TailPartition};
use crate::ranking::{top_k, CandidateFilter, Scorer};

pub use diagnostics::{
    correlation_diagnostic, coverage_length, diagnose, is_tail_focus, kl_diagnostic, kl_divergence,
    mean_coverage_length, pearson, tail_ratio_calibration, CalibrationReport, CorrelationSummary,
    CoverageSummary, DiagnosticsReport, KlSummary,
};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("metric cutoffs must be a non-empty list of positive integers")]
    InvalidCutoffs,
    #[error("worker count must be at least 1")]
    ZeroWorkers,
    #[error("{0}: every user was skipped")]
    NoUsers(&'static str),
    #[error("scorer covers {scorer} items but the dataset has {dataset}")]
    ItemMismatch { scorer: usize, dataset: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Overall,
    TailAbsolute,
    TailRelative,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Overall, Protocol::TailAbsolute, Protocol::TailRelative];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Overall => "overall",
            Protocol::TailAbsolute => "tail_absolute",
            Protocol::TailRelative => "tail_relative",
        }
    }

    /// Ground truth under this protocol (sorted).
    pub fn truth(self, test: &[usize], partition: &TailPartition) -> Vec<usize> {
        match self {
            Protocol::Overall => test.to_vec(),
            Protocol::TailAbsolute | Protocol::TailRelative => {
                test.iter().copied().filter(|&i| partition.is_tail(i)).collect()
            }
        }
    }

    pub fn filter(self, partition: &TailPartition) -> CandidateFilter<'_> {
        match self {
            Protocol::Overall | Protocol::TailAbsolute => CandidateFilter::All,
            Protocol::TailRelative => CandidateFilter::TailOnly(partition),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "overall" => Ok(Protocol::Overall),
            "tail_absolute" => Ok(Protocol::TailAbsolute),
            "tail_relative" => Ok(Protocol::TailRelative),
            other => Err(format!("unknown protocol `{other}`")),
        }
    }
}

/// `|T ∩ R^K| / |T|`. `truth` must be sorted and non-empty.
pub fn recall_at_k(ranked: &[usize], truth: &[usize], k: usize) -> f64 {
    debug_assert!(!truth.is_empty());
    let hits = ranked.iter().take(k).filter(|i| truth.binary_search(i).is_ok()).count();
    hits as f64 / truth.len() as f64
}

/// Binary-gain NDCG with `log₂(rank + 1)` discount; ideal DCG over
/// `min(K, |T|)` positions. `truth` must be sorted and non-empty.
pub fn ndcg_at_k(ranked: &[usize], truth: &[usize], k: usize) -> f64 {
    debug_assert!(!truth.is_empty());
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| truth.binary_search(i).is_ok())
        .map(|(r, _)| discount(r + 1))
        .sum();
    let idcg: f64 = (1..=k.min(truth.len())).map(discount).sum();
    dcg / idcg
}

#[inline]
fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: Protocol,
    pub lambda: f64,
    pub k: Vec<usize>,
    pub recall: Vec<f64>,
    pub ndcg: Vec<f64>,
    /// Users with non-empty protocol truth.
    pub num_users: usize,
    /// Users excluded for empty protocol truth.
    pub num_users_skipped: usize,
    /// Set when no user had protocol truth; metrics are then 0.
    pub no_users_evaluated: bool,
}

/// Splits users into `workers` contiguous ranges and concatenates results in
/// user order.
pub fn map_users<T, F>(num_users: usize, workers: usize, f: F) -> Result<Vec<T>, EvalError>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    if workers == 0 {
        return Err(EvalError::ZeroWorkers);
    }
    if workers == 1 || num_users < 2 {
        return Ok((0..num_users).map(f).collect());
    }
    let chunk = num_users.div_ceil(workers);
    let f = &f;
    let parts: Vec<Vec<T>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..num_users)
            .step_by(chunk)
            .map(|start| {
                let end = (start + chunk).min(num_users);
                scope.spawn(move || (start..end).map(f).collect::<Vec<T>>())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    Ok(parts.into_iter().flatten().collect())
}

fn check_cutoffs(k_list: &[usize]) -> Result<usize, EvalError> {
    if k_list.is_empty() || k_list.contains(&0) {
        return Err(EvalError::InvalidCutoffs);
    }
    Ok(*k_list.iter().max().expect("non-empty"))
}

pub(crate) fn check_items(scorer: &dyn Scorer, dataset: &InteractionDataset) -> Result<(), EvalError> {
    if scorer.num_items() != dataset.num_items() {
        return Err(EvalError::ItemMismatch {
            scorer: scorer.num_items(),
            dataset: dataset.num_items(),
        });
    }
    Ok(())
}

/// Mean Recall@K and NDCG@K over users with non-empty protocol truth.
/// `lambda` is recorded in the report only.
pub fn evaluate(
    scorer: &dyn Scorer,
    dataset: &InteractionDataset,
    partition: &TailPartition,
    protocol: Protocol,
    lambda: f64,
    k_list: &[usize],
    workers: usize,
) -> Result<EvalReport, EvalError> {
    let max_k = check_cutoffs(k_list)?;
    check_items(scorer, dataset)?;
    let filter = protocol.filter(partition);
    let per_user = map_users(dataset.num_users(), workers, |u| {
        let truth = protocol.truth(dataset.test_items(u), partition);
        if truth.is_empty() {
            return None;
        }
        let row = top_k(&scorer.score_row(u), dataset.train_items(u), max_k, filter).expect("max_k >= 1");
        let ranked: Vec<usize> = row.items.iter().map(|x| x.0).collect();
        Some((
            k_list.iter().map(|&k| recall_at_k(&ranked, &truth, k)).collect::<Vec<_>>(),
            k_list.iter().map(|&k| ndcg_at_k(&ranked, &truth, k)).collect::<Vec<_>>(),
        ))
    })?;

    let mut recall = vec![0.0; k_list.len()];
    let mut ndcg = vec![0.0; k_list.len()];
    let mut evaluated = 0usize;
    for (r, n) in per_user.iter().flatten() {
        for j in 0..k_list.len() {
            recall[j] += r[j];
            ndcg[j] += n[j];
        }
        evaluated += 1;
    }
    if evaluated > 0 {
        for j in 0..k_list.len() {
            recall[j] /= evaluated as f64;
            ndcg[j] /= evaluated as f64;
        }
    }
    Ok(EvalReport {
        protocol,
        lambda,
        k: k_list.to_vec(),
        recall,
        ndcg,
        num_users: evaluated,
        num_users_skipped: dataset.num_users() - evaluated,
        no_users_evaluated: evaluated == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::partition_by_popularity;
    use crate::ranking::DenseScores;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at_k(&[3, 1, 2], &[1, 3], 2), 1.0);
        assert_eq!(recall_at_k(&[3, 0, 2], &[1, 3], 2), 0.5);
        assert_eq!(recall_at_k(&[0, 2], &[1], 2), 0.0);
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&[5, 0], &[5], 2), 1.0);
        assert!((ndcg_at_k(&[0, 5], &[5], 2) - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert!((ndcg_at_k(&[0, 5], &[5], 2) - 0.63093).abs() < 1e-5);
        assert_eq!(ndcg_at_k(&[0, 1], &[5], 2), 0.0);
        // more truth than K: ideal is K hits
        assert_eq!(ndcg_at_k(&[1, 2], &[1, 2, 3], 2), 1.0);
    }

    #[test]
    fn all_head_catalogue_reports_zero_tail_users() {
        let ds = InteractionDataset::new(2, 3, vec![vec![0, 1], vec![0]], vec![vec![2], vec![2]]).unwrap();
        let partition = TailPartition::from_tail_set(3, &[], ds.item_popularity());
        let scores = DenseScores(vec![vec![0.0, 0.1, 0.2]; 2]);
        for protocol in [Protocol::TailAbsolute, Protocol::TailRelative] {
            let report = evaluate(&scores, &ds, &partition, protocol, 1.0, &[20], 1).unwrap();
            assert_eq!(report.num_users, 0);
            assert!(report.no_users_evaluated);
            assert_eq!(report.recall, vec![0.0]);
            assert!(report.ndcg.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn cutoffs_validated() {
        let ds = InteractionDataset::new(1, 2, vec![vec![0]], vec![vec![1]]).unwrap();
        let partition = partition_by_popularity(&[1, 1]).unwrap();
        let scores = DenseScores(vec![vec![0.0, 0.0]]);
        for ks in [&[][..], &[0, 5][..]] {
            assert_eq!(
                evaluate(&scores, &ds, &partition, Protocol::Overall, 1.0, ks, 1),
                Err(EvalError::InvalidCutoffs)
            );
        }
    }

    #[test]
    fn worker_count_does_not_change_result() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (m, n) = (37, 40);
        let mut train = vec![Vec::new(); m];
        let mut test = vec![Vec::new(); m];
        for u in 0..m {
            for i in 0..n {
                match rng.gen_range(0..10) {
                    0 | 1 => train[u].push(i),
                    2 => test[u].push(i),
                    _ => {}
                }
            }
        }
        let ds = InteractionDataset::new(m, n, train, test).unwrap();
        let partition = crate::data::compute_tail_partition(&ds).unwrap();
        let scores = DenseScores((0..m).map(|_| (0..n).map(|_| rng.gen::<f64>()).collect()).collect());
        for protocol in Protocol::ALL {
            let base = evaluate(&scores, &ds, &partition, protocol, 0.4, &[5, 10], 1).unwrap();
            for workers in [2, 3, 8, 64] {
                assert_eq!(evaluate(&scores, &ds, &partition, protocol, 0.4, &[5, 10], workers).unwrap(), base);
            }
        }
    }

    #[test]
    fn protocol_names_round_trip() {
        for p in Protocol::ALL {
            assert_eq!(p.as_str().parse::<Protocol>().unwrap(), p);
            assert_eq!(serde_json::to_string(&p).unwrap(), format!("\"{p}\""));
        }
        assert_eq!("tail-relative".parse::<Protocol>().unwrap(), Protocol::TailRelative);
    }
}
