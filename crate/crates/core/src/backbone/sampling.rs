use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::InteractionDataset;
use crate::error::TrainError;

/// Derives an independent stream seed from a base seed and a tuple of
/// indices (splitmix64 finalizer).
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut z = base;
    for &p in parts {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// Sampled negatives for one user batch. Positives carry weight 1; each
/// non-positive item was kept independently with probability `rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeWeightPlan {
    pub rate: f64,
    pub epoch_seed: u64,
    pub epoch: u64,
    /// `(user, sorted sampled negatives)` in batch order.
    pub users: Vec<(usize, Vec<usize>)>,
}

impl NegativeWeightPlan {
    pub fn num_negatives(&self) -> usize {
        self.users.iter().map(|(_, n)| n.len()).sum()
    }
}

pub fn validate_rate(rate: f64) -> Result<(), TrainError> {
    if rate > 0.0 && rate <= 1.0 {
        Ok(())
    } else {
        Err(TrainError::InvalidConfig(format!("negative sampling rate must lie in (0, 1], got {rate}")))
    }
}

/// Draws the Bernoulli(`rate`) negative weights for every user in the batch.
/// The draw for a user depends only on `(epoch_seed, epoch, user)`.
pub fn sample_negative_weights(
    dataset: &InteractionDataset,
    user_batch: &[usize],
    rate: f64,
    epoch_seed: u64,
    epoch: u64,
) -> Result<NegativeWeightPlan, TrainError> {
    validate_rate(rate)?;
    let users = user_batch
        .iter()
        .map(|&u| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(epoch_seed, &[epoch, u as u64]));
            let history = dataset.train_items(u);
            let mut next_pos = 0;
            let mut negatives = Vec::new();
            for i in 0..dataset.num_items() {
                if next_pos < history.len() && history[next_pos] == i {
                    next_pos += 1;
                    continue;
                }
                if rng.gen::<f64>() < rate {
                    negatives.push(i);
                }
            }
            (u, negatives)
        })
        .collect();
    Ok(NegativeWeightPlan {
        rate,
        epoch_seed,
        epoch,
        users,
    })
}
