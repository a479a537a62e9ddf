use serde::{Deserialize, Serialize};

use super::{DataError, InteractionDataset};

/// Split of the item catalogue into long-tail and head items.
///
/// Tail items are the least popular items that together account for at
/// least half of all training interactions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PartitionRepr")]
pub struct TailPartition {
    pub tail_items: Vec<usize>,
    pub head_items: Vec<usize>,
    /// Share of training interactions that land on tail items.
    pub tail_interaction_fraction: f64,
    #[serde(skip)]
    is_tail: Vec<bool>,
}

#[derive(Deserialize)]
struct PartitionRepr {
    tail_items: Vec<usize>,
    head_items: Vec<usize>,
    tail_interaction_fraction: f64,
}

impl From<PartitionRepr> for TailPartition {
    fn from(r: PartitionRepr) -> Self {
        let n = r.tail_items.len() + r.head_items.len();
        let mut is_tail = vec![false; n];
        for &i in &r.tail_items {
            is_tail[i] = true;
        }
        TailPartition {
            tail_items: r.tail_items,
            head_items: r.head_items,
            tail_interaction_fraction: r.tail_interaction_fraction,
            is_tail,
        }
    }
}

impl TailPartition {
    pub fn is_tail(&self, item: usize) -> bool {
        self.is_tail[item]
    }

    pub fn num_items(&self) -> usize {
        self.is_tail.len()
    }

    /// Builds a partition from an explicit tail set (every other item is head).
    pub fn from_tail_set(num_items: usize, tail: &[usize], popularity: &[u32]) -> Self {
        let mut is_tail = vec![false; num_items];
        for &i in tail {
            is_tail[i] = true;
        }
        let total: u64 = popularity.iter().map(|&p| u64::from(p)).sum();
        let tail_total: u64 = tail.iter().map(|&i| u64::from(popularity[i])).sum();
        let tail_items: Vec<usize> = (0..num_items).filter(|&i| is_tail[i]).collect();
        let head_items: Vec<usize> = (0..num_items).filter(|&i| !is_tail[i]).collect();
        TailPartition {
            tail_items,
            head_items,
            tail_interaction_fraction: if total == 0 { 0.0 } else { tail_total as f64 / total as f64 },
            is_tail,
        }
    }
}

/// Partitions items by training popularity.
///
/// Items are sorted by `(popularity, item id)` ascending and accumulated
/// until the running interaction count first reaches half the total.
pub fn partition_by_popularity(popularity: &[u32]) -> Result<TailPartition, DataError> {
    let total: u64 = popularity.iter().map(|&p| u64::from(p)).sum();
    if total == 0 {
        return Err(DataError::NoInteractions);
    }
    let mut order: Vec<usize> = (0..popularity.len()).collect();
    order.sort_by_key(|&i| (popularity[i], i));

    let mut cumulative = 0u64;
    let mut tail = Vec::new();
    for &i in &order {
        // cumulative >= total / 2, kept in integers
        if 2 * cumulative >= total {
            break;
        }
        cumulative += u64::from(popularity[i]);
        tail.push(i);
    }
    Ok(TailPartition::from_tail_set(popularity.len(), &tail, popularity))
}

pub fn compute_tail_partition(dataset: &InteractionDataset) -> Result<TailPartition, DataError> {
    partition_by_popularity(dataset.item_popularity())
}
