//! Seeded generator for skewed-popularity implicit-feedback data.
//!
//! Each user has a latent taste vector and each item a latent profile; the
//! affinity of a pair is `exp(sharpness · ⟨x_u, y_i⟩ / √d)`. Items also get
//! an exposure weight drawn from a power law over a random item ranking.
//! A user's positives are drawn without replacement proportionally to
//! `affinity × exposure`, and the held-out share is drawn proportionally to
//! `affinity / exposure`, so test positives lean towards rarely exposed
//! items that the training data under-represents.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, InteractionDataset};
use crate::matrix::{dot, Matrix};

const AFFINITY_SHARPNESS: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub latent_dim: usize,
    pub popularity_skew_exponent: f64,
    pub interactions_per_user: usize,
    pub test_holdout_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_users: 200,
            num_items: 500,
            latent_dim: 8,
            popularity_skew_exponent: 1.2,
            interactions_per_user: 20,
            test_holdout_fraction: 0.3,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidSpec(m));
        if self.num_users == 0 || self.num_items == 0 || self.latent_dim == 0 || self.interactions_per_user == 0 {
            return bad("user, item, latent and per-user counts must be positive".into());
        }
        if !(self.popularity_skew_exponent.is_finite() && self.popularity_skew_exponent >= 0.0) {
            return bad(format!(
                "skew exponent must be finite and non-negative, got {}",
                self.popularity_skew_exponent
            ));
        }
        if !(self.test_holdout_fraction > 0.0 && self.test_holdout_fraction < 1.0) {
            return bad(format!(
                "holdout fraction must lie strictly between 0 and 1, got {}",
                self.test_holdout_fraction
            ));
        }
        if self.interactions_per_user > self.num_items {
            return bad(format!(
                "{} interactions per user exceed the {} available items",
                self.interactions_per_user, self.num_items
            ));
        }
        Ok(())
    }

    fn holdout_count(&self) -> usize {
        let k = (self.test_holdout_fraction * self.interactions_per_user as f64).round() as usize;
        if self.interactions_per_user < 2 {
            0
        } else {
            k.clamp(1, self.interactions_per_user - 1)
        }
    }
}

/// The latent quantities the interactions were sampled from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthAffinity {
    /// `num_users × num_items` affinity (before exposure).
    pub affinity: Matrix,
    /// Per-item exposure weight, the largest equal to 1.
    pub exposure: Vec<f64>,
}

impl GroundTruthAffinity {
    /// Planted positives that were never observed in either split.
    pub fn unobserved_top_items(&self, dataset: &InteractionDataset, user: usize, k: usize) -> Vec<usize> {
        let mut items: Vec<usize> = (0..dataset.num_items())
            .filter(|&i| !dataset.is_train_positive(user, i) && dataset.test_items(user).binary_search(&i).is_err())
            .collect();
        let row = self.affinity.row(user);
        items.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        items.truncate(k);
        items
    }
}

/// Weighted sampling without replacement (Efraimidis–Spirakis keys).
fn weighted_sample<R: Rng>(weights: &[(usize, f64)], k: usize, rng: &mut R) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .map(|&(i, w)| {
            let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let key = if w > 0.0 { u.ln() / w } else { f64::NEG_INFINITY };
            (key, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().take(k).map(|(_, i)| i).collect()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(InteractionDataset, GroundTruthAffinity), DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (m, n, d) = (spec.num_users, spec.num_items, spec.latent_dim);

    let users = Matrix::random_normal(m, d, 1.0, &mut rng);
    let items = Matrix::random_normal(n, d, 1.0, &mut rng);
    let scale = AFFINITY_SHARPNESS / (d as f64).sqrt();
    let mut affinity = Matrix::zeros(m, n);
    for u in 0..m {
        for i in 0..n {
            affinity.set(u, i, (scale * dot(users.row(u), items.row(i))).exp());
        }
    }

    let mut ranking: Vec<usize> = (0..n).collect();
    ranking.shuffle(&mut rng);
    let mut exposure = vec![0.0; n];
    for (rank, &item) in ranking.iter().enumerate() {
        exposure[item] = ((rank + 1) as f64).powf(-spec.popularity_skew_exponent);
    }

    let holdout = spec.holdout_count();
    let mut train = Vec::with_capacity(m);
    let mut test = Vec::with_capacity(m);
    for u in 0..m {
        let row = affinity.row(u);
        let weights: Vec<(usize, f64)> = (0..n).map(|i| (i, row[i] * exposure[i])).collect();
        let positives = weighted_sample(&weights, spec.interactions_per_user, &mut rng);
        let held_weights: Vec<(usize, f64)> = positives.iter().map(|&i| (i, row[i] / exposure[i])).collect();
        let mut held = weighted_sample(&held_weights, holdout, &mut rng);
        held.sort_unstable();
        let kept: Vec<usize> = positives.into_iter().filter(|i| held.binary_search(i).is_err()).collect();
        train.push(kept);
        test.push(held);
    }

    let dataset = InteractionDataset::new(m, n, train, test)?;
    Ok((dataset, GroundTruthAffinity { affinity, exposure }))
}
