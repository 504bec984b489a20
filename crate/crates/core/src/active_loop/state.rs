use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ground-truth labels for the target pool, queried one index at a time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Oracle {
    labels: Vec<usize>,
    num_classes: usize,
}

impl Oracle {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                row,
                label,
                num_classes,
            });
        }
        Ok(Oracle { labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    /// Label of a target-pool index. Each query costs one unit.
    pub fn query(&self, pool_index: usize) -> Result<usize> {
        self.labels
            .get(pool_index)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("pool index {pool_index} not covered by the oracle")))
    }
}

/// Partition of the target pool into labeled and unlabeled indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveState {
    pool_size: usize,
    /// Pool indices in labeling order.
    labeled_target: Vec<usize>,
    /// Labels returned by the oracle, parallel to `labeled_target`.
    labeled_target_labels: Vec<usize>,
    /// Remaining pool indices in ascending order.
    unlabeled_target: Vec<usize>,
    round: usize,
}

impl ActiveState {
    pub fn new(pool_size: usize) -> Self {
        ActiveState {
            pool_size,
            labeled_target: Vec::new(),
            labeled_target_labels: Vec::new(),
            unlabeled_target: (0..pool_size).collect(),
            round: 0,
        }
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn pool_size(&self) -> usize {
        self.pool_size
    }

    pub fn labeled_target(&self) -> &[usize] {
        &self.labeled_target
    }

    pub fn labeled_target_labels(&self) -> &[usize] {
        &self.labeled_target_labels
    }

    pub fn unlabeled_target(&self) -> &[usize] {
        &self.unlabeled_target
    }

    /// Moves the rows at `positions` (indices into the unlabeled list) to the
    /// labeled set, querying the oracle for each, and advances the round.
    /// Returns the pool indices that were labeled.
    pub fn label(&mut self, positions: &[usize], oracle: &Oracle) -> Result<Vec<usize>> {
        let n = self.unlabeled_target.len();
        let mut take = vec![false; n];
        for &p in positions {
            if p >= n {
                return Err(Error::InvalidArgument(format!(
                    "position {p} outside the unlabeled pool of {n}"
                )));
            }
            if take[p] {
                return Err(Error::InvalidArgument(format!("position {p} selected twice")));
            }
            take[p] = true;
        }
        let chosen: Vec<usize> = positions.iter().map(|&p| self.unlabeled_target[p]).collect();
        let labels = chosen.iter().map(|&i| oracle.query(i)).collect::<Result<Vec<_>>>()?;
        self.labeled_target.extend_from_slice(&chosen);
        self.labeled_target_labels.extend(labels);
        let mut keep = take.iter();
        self.unlabeled_target.retain(|_| !*keep.next().expect("same length"));
        self.round += 1;
        debug_assert!(self.is_partition());
        Ok(chosen)
    }

    /// Labeled and unlabeled sets are disjoint and together cover the pool.
    pub fn is_partition(&self) -> bool {
        let mut seen = vec![false; self.pool_size];
        for &i in self.labeled_target.iter().chain(&self.unlabeled_target) {
            if i >= self.pool_size || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }
}
