//! Random fold schemes for cross-fitting.
//!
//! A scheme is stored as a label per unit rather than as a permutation matrix;
//! fold membership and fold-exclusion sets are recovered from the labels.
//! Units and folds are 0-based.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Partition of `n` units into `folds` labelled folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldScheme {
    folds: usize,
    assignment: Vec<usize>,
    seed: Option<u64>,
}

impl FoldScheme {
    /// Uniformly random near-even partition of `n` units into `folds` folds.
    ///
    /// Fold sizes differ by at most one. The labels are a deterministic
    /// function of `(n, folds, seed)`: a balanced label vector shuffled by a
    /// ChaCha8 stream seeded with `seed`.
    pub fn sample(n: usize, folds: usize, seed: u64) -> Result<Self> {
        if folds < 2 || folds > n {
            return Err(Error::BadFoldCount { folds, n });
        }
        let mut assignment: Vec<usize> = (0..n).map(|i| i % folds).collect();
        assignment.shuffle(&mut rng::seeded(seed));
        Ok(Self {
            folds,
            assignment,
            seed: Some(seed),
        })
    }

    /// Scheme from explicit labels. Every fold in `0..folds` must be nonempty,
    /// but sizes need not be balanced.
    pub fn from_assignment(assignment: Vec<usize>, folds: usize) -> Result<Self> {
        let n = assignment.len();
        if folds < 2 || folds > n {
            return Err(Error::BadFoldCount { folds, n });
        }
        let mut seen = vec![false; folds];
        for &k in &assignment {
            if k >= folds {
                return Err(Error::IndexOutOfRange {
                    index: k,
                    len: folds,
                });
            }
            seen[k] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config(format!(
                "fold assignment leaves a fold empty ({folds} folds, {n} units)"
            )));
        }
        Ok(Self {
            folds,
            assignment,
            seed: None,
        })
    }

    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn folds(&self) -> usize {
        self.folds
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Fold label of unit `i`.
    pub fn fold_of(&self, i: usize) -> Result<usize> {
        self.assignment
            .get(i)
            .copied()
            .ok_or(Error::IndexOutOfRange {
                index: i,
                len: self.n(),
            })
    }

    fn check_fold(&self, k: usize) -> Result<()> {
        if k >= self.folds {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.folds,
            });
        }
        Ok(())
    }

    /// Sorted units assigned to fold `k`.
    pub fn members(&self, k: usize) -> Result<Vec<usize>> {
        self.check_fold(k)?;
        Ok(self.units_where(|label| label == k))
    }

    /// Sorted units outside fold `k`, i.e. the training rows for fold `k`.
    pub fn exclusion_indices(&self, k: usize) -> Result<Vec<usize>> {
        self.check_fold(k)?;
        Ok(self.units_where(|label| label != k))
    }

    fn units_where(&self, keep: impl Fn(usize) -> bool) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|&(_, &label)| keep(label))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.folds];
        for &k in &self.assignment {
            sizes[k] += 1;
        }
        sizes
    }

    /// The scheme restricted to units `0..n`, keeping their labels.
    pub fn restrict_to_prefix(&self, n: usize) -> Result<Self> {
        if n > self.n() {
            return Err(Error::IndexOutOfRange {
                index: n,
                len: self.n(),
            });
        }
        Self::from_assignment(self.assignment[..n].to_vec(), self.folds)
    }
}
