use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Partition of `0..T` into training and holdout rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
}

impl Allocation {
    pub fn len(&self) -> usize {
        self.train.len() + self.holdout.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Membership mask of the holdout rows.
    pub fn holdout_mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.len()];
        for &t in &self.holdout {
            m[t] = true;
        }
        m
    }
}

/// Cut `0..T` into contiguous blocks of `block_len` (the last may be shorter)
/// and send a random `round((1 - train_frac)·blocks)` of them to the holdout
/// set, keeping at least one block on each side.
pub fn block_allocate<R: Rng + ?Sized>(
    t: usize,
    block_len: usize,
    train_frac: f64,
    rng: &mut R,
) -> Result<Allocation> {
    if block_len == 0 {
        return Err(Error::Config("block length must be at least 1".into()));
    }
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::Config(format!("train fraction {train_frac} not in (0, 1)")));
    }
    if t < 2 * block_len {
        return Err(Error::Insufficient(format!(
            "{t} rows cannot hold two blocks of {block_len}"
        )));
    }
    let n_blocks = t.div_ceil(block_len);
    let n_hold = (((1.0 - train_frac) * n_blocks as f64).round() as usize).clamp(1, n_blocks - 1);
    let mut order: Vec<usize> = (0..n_blocks).collect();
    order.shuffle(rng);
    let mut is_hold = vec![false; n_blocks];
    for &b in &order[..n_hold] {
        is_hold[b] = true;
    }
    let (mut train, mut holdout) = (Vec::new(), Vec::new());
    for row in 0..t {
        if is_hold[row / block_len] {
            holdout.push(row);
        } else {
            train.push(row);
        }
    }
    Ok(Allocation { train, holdout })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_blocks_split_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let a = block_allocate(12, 6, 0.5, &mut rng).unwrap();
            assert_eq!(a.train.len(), 6);
            assert_eq!(a.holdout.len(), 6);
            let first = a.holdout[0];
            assert!(first == 0 || first == 6);
            assert_eq!(a.holdout, (first..first + 6).collect::<Vec<_>>());
        }
    }

    #[test]
    fn degenerate_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(block_allocate(11, 6, 0.5, &mut rng).is_err());
        assert!(block_allocate(40, 0, 0.5, &mut rng).is_err());
        assert!(block_allocate(40, 6, 1.0, &mut rng).is_err());
        assert!(block_allocate(40, 6, 0.0, &mut rng).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn sets_partition_rows(seed in any::<u64>(), t in 12usize..300, block in 1usize..7, frac in 0.05f64..0.95) {
            prop_assume!(t >= 2 * block);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = block_allocate(t, block, frac, &mut rng).unwrap();
            let mut all: Vec<usize> = a.train.iter().chain(&a.holdout).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..t).collect::<Vec<_>>());
            prop_assert!(!a.train.is_empty() && !a.holdout.is_empty());
            // within one block of the requested share
            let share = a.train.len() as f64 / t as f64;
            let n_blocks = t.div_ceil(block) as f64;
            prop_assert!((share - frac).abs() <= 1.0 / n_blocks + block as f64 / t as f64 + 1e-12);
        }
    }

    #[test]
    fn holdout_frequency_matches_fraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (t, draws) = (400, 4000);
        let mut counts = vec![0usize; t];
        for _ in 0..draws {
            for r in block_allocate(t, 6, 0.85, &mut rng).unwrap().holdout {
                counts[r] += 1;
            }
        }
        let overall = counts.iter().sum::<usize>() as f64 / (t * draws) as f64;
        assert!((overall - 0.15).abs() < 0.02, "{overall}");
        for c in counts {
            let f = c as f64 / draws as f64;
            assert!((f - 0.15).abs() < 0.03, "{f}");
        }
    }
}
