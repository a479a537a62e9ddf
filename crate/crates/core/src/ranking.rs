//! Blending expectation and uncertainty into ranking scores, and masked
//! top-K selection.

use std::fmt::Write as _;

use thiserror::Error;

use crate::backbone::ExpectationScorer;
use crate::data::{InteractionDataset, TailPartition};
use crate::uncertainty::UncertaintyScorer;

#[derive(Debug, Error, PartialEq)]
pub enum RankingError {
    #[error("blend weight must lie in [0, 1], got {0}")]
    InvalidLambda(f64),
    #[error("K must be at least 1")]
    ZeroK,
}

/// Validated blend weight `λ ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blend(f64);

impl Blend {
    pub fn new(lambda: f64) -> Result<Self, RankingError> {
        if (0.0..=1.0).contains(&lambda) {
            Ok(Blend(lambda))
        } else {
            Err(RankingError::InvalidLambda(lambda))
        }
    }

    pub fn lambda(self) -> f64 {
        self.0
    }

    /// `λ·r + (1 − λ)·√σ²`.
    #[inline]
    pub fn score(self, expectation: f64, variance: f64) -> f64 {
        self.0 * expectation + (1.0 - self.0) * variance.sqrt()
    }
}

pub fn blended_score(expectation: f64, variance: f64, lambda: f64) -> Result<f64, RankingError> {
    Ok(Blend::new(lambda)?.score(expectation, variance))
}

/// Produces one dense score row per user.
pub trait Scorer: Sync {
    fn num_items(&self) -> usize;
    fn score_row(&self, user: usize) -> Vec<f64>;
}

impl Scorer for ExpectationScorer {
    fn num_items(&self) -> usize {
        ExpectationScorer::num_items(self)
    }

    fn score_row(&self, user: usize) -> Vec<f64> {
        self.predict_row(user)
    }
}

/// Expectation blended with the uncertainty's standard deviation.
pub struct AurScorer<'a> {
    expectation: &'a ExpectationScorer,
    uncertainty: &'a UncertaintyScorer<'a>,
    blend: Blend,
}

impl<'a> AurScorer<'a> {
    pub fn new(expectation: &'a ExpectationScorer, uncertainty: &'a UncertaintyScorer<'a>, blend: Blend) -> Self {
        AurScorer {
            expectation,
            uncertainty,
            blend,
        }
    }
}

impl Scorer for AurScorer<'_> {
    fn num_items(&self) -> usize {
        self.expectation.num_items()
    }

    fn score_row(&self, user: usize) -> Vec<f64> {
        self.expectation
            .predict_row(user)
            .into_iter()
            .zip(self.uncertainty.variance_row(user))
            .map(|(r, var)| self.blend.score(r, var))
            .collect()
    }
}

/// Precomputed score rows, mainly for tests and hand-built instances.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseScores(pub Vec<Vec<f64>>);

impl Scorer for DenseScores {
    fn num_items(&self) -> usize {
        self.0.first().map_or(0, Vec::len)
    }

    fn score_row(&self, user: usize) -> Vec<f64> {
        self.0[user].clone()
    }
}

/// Which items may be recommended besides excluding the user's history.
#[derive(Debug, Clone, Copy)]
pub enum CandidateFilter<'a> {
    All,
    TailOnly(&'a TailPartition),
}

impl CandidateFilter<'_> {
    #[inline]
    fn admits(&self, item: usize) -> bool {
        match self {
            CandidateFilter::All => true,
            CandidateFilter::TailOnly(p) => p.is_tail(item),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedRow {
    /// `(item, score)` by score descending, ties by ascending item id.
    pub items: Vec<(usize, f64)>,
    /// Fewer candidates than requested.
    pub truncated: bool,
}

#[inline]
fn rank_order(a: &(usize, f64), b: &(usize, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

fn candidates(scores: &[f64], history: &[usize], filter: CandidateFilter<'_>) -> Vec<(usize, f64)> {
    scores
        .iter()
        .enumerate()
        .filter(|(i, _)| filter.admits(*i) && history.binary_search(i).is_err())
        .map(|(i, &s)| (i, s))
        .collect()
}

/// Admitted candidates not in `history` (sorted), ranked.
pub fn ranked_candidates(scores: &[f64], history: &[usize], filter: CandidateFilter<'_>) -> Vec<(usize, f64)> {
    let mut cands = candidates(scores, history, filter);
    cands.sort_by(rank_order);
    cands
}

pub fn top_k(
    scores: &[f64],
    history: &[usize],
    k: usize,
    filter: CandidateFilter<'_>,
) -> Result<RankedRow, RankingError> {
    if k == 0 {
        return Err(RankingError::ZeroK);
    }
    let mut cands = candidates(scores, history, filter);
    let truncated = cands.len() < k;
    if cands.len() > k {
        cands.select_nth_unstable_by(k - 1, rank_order);
        cands.truncate(k);
    }
    cands.sort_by(rank_order);
    Ok(RankedRow { items: cands, truncated })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecommendationList {
    pub lambda: f64,
    pub rows: Vec<RankedRow>,
}

pub fn recommend(
    scorer: &dyn Scorer,
    dataset: &InteractionDataset,
    k: usize,
    lambda: f64,
    filter: CandidateFilter<'_>,
) -> Result<RecommendationList, RankingError> {
    let rows = (0..dataset.num_users())
        .map(|u| top_k(&scorer.score_row(u), dataset.train_items(u), k, filter))
        .collect::<Result<_, _>>()?;
    Ok(RecommendationList { lambda, rows })
}

impl RecommendationList {
    /// `user<TAB>rank<TAB>item<TAB>score`, ranks 1-based.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (u, row) in self.rows.iter().enumerate() {
            for (rank, (item, score)) in row.items.iter().enumerate() {
                writeln!(out, "{u}\t{}\t{item}\t{}", rank + 1, format_significant(*score, 6)).unwrap();
            }
        }
        out
    }
}

/// C `%g`-style formatting with `digits` significant digits.
pub fn format_significant(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let p = digits.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}
