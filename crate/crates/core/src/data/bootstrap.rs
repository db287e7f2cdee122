use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, MIN_ROWS};
use crate::seed;

/// Redraw budget for a degenerate resample.
pub const MAX_REDRAWS: usize = 50;

/// One out-of-sample bootstrap resample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BootstrapSplit {
    pub iteration: usize,
    /// `n_rows` draws with replacement, in draw order.
    pub train: Vec<usize>,
    /// Rows never drawn, ascending.
    pub test: Vec<usize>,
}

impl BootstrapSplit {
    pub fn test_fraction(&self) -> f64 {
        self.test.len() as f64 / self.train.len() as f64
    }
}

/// `k` out-of-sample bootstrap splits over `n_rows` rows. Iteration `i` draws
/// from a ChaCha8 stream seeded by `seed::derive(seed, [i])`; an empty test
/// set is redrawn from the same (advanced) stream.
pub fn bootstrap_splits(n_rows: usize, k: usize, seed: u64) -> Result<Vec<BootstrapSplit>, DataError> {
    splits(n_rows, k, seed, |_| true)
}

/// As [`bootstrap_splits`], additionally redrawing resamples whose test set
/// is single-class or whose train set has fewer than two rows of a class.
pub fn bootstrap_splits_for(labels: &[u8], k: usize, seed: u64) -> Result<Vec<BootstrapSplit>, DataError> {
    splits(labels.len(), k, seed, |s| {
        let test_pos = s.test.iter().filter(|&&r| labels[r] == 1).count();
        let train_pos = s.train.iter().filter(|&&r| labels[r] == 1).count();
        test_pos > 0 && test_pos < s.test.len() && train_pos >= 2 && s.train.len() - train_pos >= 2
    })
}

fn splits(
    n_rows: usize,
    k: usize,
    seed: u64,
    usable: impl Fn(&BootstrapSplit) -> bool,
) -> Result<Vec<BootstrapSplit>, DataError> {
    if n_rows < MIN_ROWS {
        return Err(DataError::TooFewRows { found: n_rows, required: MIN_ROWS });
    }
    if k == 0 {
        return Err(DataError::InvalidParameter("bootstrap count must be at least 1".into()));
    }
    (0..k)
        .map(|iteration| {
            let mut rng = seed::rng_for(seed, &[iteration as u64]);
            for _ in 0..=MAX_REDRAWS {
                let train: Vec<usize> = (0..n_rows).map(|_| rng.random_range(0..n_rows)).collect();
                let mut drawn = vec![false; n_rows];
                for &r in &train {
                    drawn[r] = true;
                }
                let test: Vec<usize> = (0..n_rows).filter(|&r| !drawn[r]).collect();
                let split = BootstrapSplit { iteration, train, test };
                if !split.test.is_empty() && usable(&split) {
                    return Ok(split);
                }
            }
            Err(DataError::BootstrapExhausted { iteration, retries: MAX_REDRAWS })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deterministic() {
        assert_eq!(bootstrap_splits(50, 5, 11).unwrap(), bootstrap_splits(50, 5, 11).unwrap());
        assert_ne!(bootstrap_splits(50, 5, 11).unwrap(), bootstrap_splits(50, 5, 12).unwrap());
    }

    #[test]
    fn small_split_is_disjoint() {
        let s = &bootstrap_splits(10, 1, 0).unwrap()[0];
        assert!(s.test.iter().all(|t| !s.train.contains(t)));
        assert!(!s.test.is_empty());
    }

    #[test]
    fn oob_fraction_near_e_inverse() {
        let splits = bootstrap_splits(1000, 100, 42).unwrap();
        let mean = splits.iter().map(BootstrapSplit::test_fraction).sum::<f64>() / 100.0;
        assert!((0.338..=0.398).contains(&mean), "mean {mean}");
    }

    #[test]
    fn labeled_splits_have_both_classes() {
        let mut labels = vec![0u8; 30];
        labels[3] = 1;
        labels[17] = 1;
        labels[25] = 1;
        for s in bootstrap_splits_for(&labels, 20, 9).unwrap() {
            assert!(s.test.iter().any(|&r| labels[r] == 1));
            assert!(s.test.iter().any(|&r| labels[r] == 0));
        }
    }

    #[test]
    fn impossible_constraint_exhausts() {
        // A single positive can never appear in both train and test.
        let mut labels = vec![0u8; 12];
        labels[0] = 1;
        assert!(matches!(bootstrap_splits_for(&labels, 1, 0), Err(DataError::BootstrapExhausted { .. })));
    }

    #[test]
    fn parameter_errors() {
        assert!(bootstrap_splits(9, 1, 0).is_err());
        assert!(bootstrap_splits(10, 0, 0).is_err());
    }

    proptest! {
        #[test]
        fn partition_invariant(n in 10usize..200, seed in any::<u64>()) {
            for s in bootstrap_splits(n, 3, seed).unwrap() {
                prop_assert_eq!(s.train.len(), n);
                let mut present = vec![false; n];
                for &r in &s.train { present[r] = true; }
                for &r in &s.test {
                    prop_assert!(!present[r]);
                    present[r] = true;
                }
                prop_assert!(present.iter().all(|&p| p));
            }
        }
    }
}
