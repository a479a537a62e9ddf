//! Implicit-feedback interaction datasets.
//!
//! A dataset holds, for every user, the set of items interacted with in the
//! training split (`H_u`) and in the test split (`T_u`), together with the
//! per-item training popularity. Labels are implicit: `Y_ui = 1` iff
//! `i ∈ H_u`.

mod io;
mod partition;
mod synth;

use std::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use io::{load_interactions, parse_interactions, DataFormat, SerializedDataset};
pub use partition::{compute_tail_partition, partition_by_popularity, TailPartition};
pub use synth::{generate_synthetic, GroundTruthAffinity, SyntheticSpec};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file} line {line}: {message}")]
    Malformed {
        file: &'static str,
        line: usize,
        message: String,
    },
    #[error("{file} line {line}: duplicate item {item} in history of user {user}")]
    Duplicate {
        file: &'static str,
        line: usize,
        user: usize,
        item: usize,
    },
    #[error("{file} line {line}: {kind} id {id} out of declared range 0..{limit}")]
    OutOfRange {
        file: &'static str,
        line: usize,
        kind: &'static str,
        id: usize,
        limit: usize,
    },
    #[error("user {user} has item {item} in both train and test")]
    Overlap { user: usize, item: usize },
    #[error("train and test headers disagree: {0}")]
    HeaderConflict(String),
    #[error("dataset has no training interactions")]
    NoInteractions,
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

/// Validated train/test interactions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionDataset {
    num_users: usize,
    num_items: usize,
    train: Vec<Vec<usize>>,
    test: Vec<Vec<usize>>,
    popularity: Vec<u32>,
}

impl InteractionDataset {
    /// Builds a dataset from per-user item lists. Histories are sorted; any
    /// duplicate, out-of-range id or train/test overlap is rejected.
    pub fn new(
        num_users: usize,
        num_items: usize,
        mut train: Vec<Vec<usize>>,
        mut test: Vec<Vec<usize>>,
    ) -> Result<Self, DataError> {
        if train.len() > num_users || test.len() > num_users {
            return Err(DataError::OutOfRange {
                file: "train",
                line: 0,
                kind: "user",
                id: train.len().max(test.len()) - 1,
                limit: num_users,
            });
        }
        train.resize(num_users, Vec::new());
        test.resize(num_users, Vec::new());
        for (file, lists) in [("train", &mut train), ("test", &mut test)] {
            for (user, items) in lists.iter_mut().enumerate() {
                items.sort_unstable();
                for w in items.windows(2) {
                    if w[0] == w[1] {
                        return Err(DataError::Duplicate {
                            file,
                            line: 0,
                            user,
                            item: w[0],
                        });
                    }
                }
                if let Some(&last) = items.last() {
                    if last >= num_items {
                        return Err(DataError::OutOfRange {
                            file,
                            line: 0,
                            kind: "item",
                            id: last,
                            limit: num_items,
                        });
                    }
                }
            }
        }
        let mut popularity = vec![0u32; num_items];
        for (user, (h, t)) in train.iter().zip(&test).enumerate() {
            for &i in h {
                popularity[i] += 1;
            }
            if let Some(&item) = t.iter().find(|i| h.binary_search(i).is_ok()) {
                return Err(DataError::Overlap { user, item });
            }
        }
        Ok(InteractionDataset {
            num_users,
            num_items,
            train,
            test,
            popularity,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    /// Sorted training history `H_u`.
    pub fn train_items(&self, user: usize) -> &[usize] {
        &self.train[user]
    }

    /// Sorted test items `T_u`.
    pub fn test_items(&self, user: usize) -> &[usize] {
        &self.test[user]
    }

    pub fn is_train_positive(&self, user: usize, item: usize) -> bool {
        self.train[user].binary_search(&item).is_ok()
    }

    pub fn item_popularity(&self) -> &[u32] {
        &self.popularity
    }

    pub fn num_train_interactions(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn num_test_interactions(&self) -> usize {
        self.test.iter().map(Vec::len).sum()
    }

    /// Dense 0/1 label row for `user` (1 on training positives).
    pub fn label_row(&self, user: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.num_items];
        for &i in &self.train[user] {
            row[i] = 1.0;
        }
        row
    }

    /// Drops every interaction with `item` from both splits, keeping ids.
    pub fn without_item(&self, item: usize) -> InteractionDataset {
        let strip = |lists: &Vec<Vec<usize>>| -> Vec<Vec<usize>> {
            lists
                .iter()
                .map(|l| l.iter().copied().filter(|&i| i != item).collect())
                .collect()
        };
        InteractionDataset::new(self.num_users, self.num_items, strip(&self.train), strip(&self.test))
            .expect("removing an item keeps a dataset valid")
    }

    /// SHA-256 over the canonical adjacency-list serialization.
    pub fn content_hash(&self) -> DatasetHash {
        let files = self.to_adjlist();
        let mut hasher = Sha256::new();
        hasher.update(files.train.as_bytes());
        hasher.update(b"\0");
        hasher.update(files.test.as_bytes());
        DatasetHash(hex::encode(hasher.finalize()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct DatasetHash(pub String);

impl fmt::Display for DatasetHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_overlap() {
        let err = InteractionDataset::new(1, 3, vec![vec![0, 1]], vec![vec![1]]).unwrap_err();
        assert!(matches!(err, DataError::Overlap { user: 0, item: 1 }));
    }

    #[test]
    fn popularity_counts_train_only() {
        let ds = InteractionDataset::new(2, 3, vec![vec![0, 1], vec![1]], vec![vec![2], vec![0]]).unwrap();
        assert_eq!(ds.item_popularity(), &[1, 2, 0]);
        assert_eq!(ds.label_row(1), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn without_item_updates_popularity() {
        let ds = InteractionDataset::new(2, 3, vec![vec![0, 1], vec![1]], vec![vec![2], vec![0]]).unwrap();
        let reduced = ds.without_item(1);
        assert_eq!(reduced.item_popularity(), &[1, 0, 0]);
        assert_eq!(reduced.num_items(), 3);
    }
}
