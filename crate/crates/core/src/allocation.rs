//! Run allocations: how a budget of N runs is spread over K training
//! instances.
//!
//! The estimator variance grows with Σnᵢ² and the tail bounds grow with
//! max nᵢ, so among all ways to spend the same budget the near-even split is
//! optimal on both counts. The other two constructors exist as baselines:
//! greedy batching (a few instances get a full batch each) and per-run
//! instance draws with replacement.

use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

/// Per-instance run counts; the budget N is their sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    counts: Vec<u64>,
}

impl Allocation {
    pub fn from_counts(counts: Vec<u64>) -> Allocation {
        Allocation { counts }
    }

    /// Spreads N as evenly as possible: every instance gets ⌊N/K⌋ runs and a
    /// uniformly chosen set of N mod K instances gets one extra.
    pub fn even<R: Rng + ?Sized>(n: u64, k: usize, rng: &mut R) -> Result<Allocation> {
        if k == 0 {
            return Err(Error::invalid("allocation requires at least one instance (K = 0)"));
        }
        let base = n / k as u64;
        let extra = (n % k as u64) as usize;
        let mut counts = vec![base; k];
        for i in index::sample(rng, k, extra) {
            counts[i] += 1;
        }
        Ok(Allocation { counts })
    }

    /// Greedy batching: uniformly selected instances receive `batch` runs
    /// apiece until the budget runs out; the last selected instance gets the
    /// residual N mod batch. Errors when the budget needs more than K
    /// instances (N > K·batch).
    pub fn batched<R: Rng + ?Sized>(n: u64, k: usize, batch: u64, rng: &mut R) -> Result<Allocation> {
        if k == 0 {
            return Err(Error::invalid("allocation requires at least one instance (K = 0)"));
        }
        if batch == 0 {
            return Err(Error::invalid("batch size must be positive"));
        }
        if n > k as u64 * batch {
            return Err(Error::invalid(format!(
                "budget N = {n} needs more than K = {k} instances at batch size {batch}"
            )));
        }
        let full = (n / batch) as usize;
        let residual = n % batch;
        let selected = index::sample(rng, k, full + usize::from(residual > 0));
        let mut counts = vec![0; k];
        for (j, i) in selected.into_iter().enumerate() {
            counts[i] = if j < full { batch } else { residual };
        }
        Ok(Allocation { counts })
    }

    /// N independent uniform instance draws with replacement; counts are the
    /// draw multiplicities (so Σnᵢ² is N + #ordered collisions).
    pub fn with_replacement<R: Rng + ?Sized>(n: u64, k: usize, rng: &mut R) -> Result<Allocation> {
        if k == 0 {
            return Err(Error::invalid("allocation requires at least one instance (K = 0)"));
        }
        let mut counts = vec![0; k];
        for _ in 0..n {
            counts[rng.random_range(0..k)] += 1;
        }
        Ok(Allocation { counts })
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// K, including instances with zero runs.
    pub fn num_instances(&self) -> usize {
        self.counts.len()
    }

    /// N = Σnᵢ.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// max nᵢ (0 for an empty allocation).
    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Σnᵢ².
    pub fn sum_of_squares(&self) -> u64 {
        self.counts.iter().map(|c| c * c).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn even_splits_ten_over_four_as_two_threes() {
        let alloc = Allocation::even(10, 4, &mut rng::stream(0, 0)).unwrap();
        let mut sorted = alloc.counts().to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, [2, 2, 3, 3]);
        assert_eq!(alloc.total(), 10);
        assert_eq!(alloc.max_count(), 3);
        assert_eq!(alloc.sum_of_squares(), 26);
    }

    #[test]
    fn even_is_uniform_when_k_divides_n() {
        let alloc = Allocation::even(12, 4, &mut rng::stream(0, 0)).unwrap();
        assert_eq!(alloc.counts(), [3, 3, 3, 3]);
        assert_eq!(alloc.sum_of_squares(), 36);
    }

    #[test]
    fn batched_fills_batches_then_residual() {
        let alloc = Allocation::batched(12, 3, 5, &mut rng::stream(1, 0)).unwrap();
        let mut sorted = alloc.counts().to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, [2, 5, 5]);
        assert_eq!(alloc.total(), 12);
    }

    #[test]
    fn batched_rejects_budgets_beyond_capacity() {
        let err = Allocation::batched(16, 3, 5, &mut rng::stream(1, 0)).unwrap_err();
        assert!(err.to_string().contains("more than K = 3 instances"));
    }

    #[test]
    fn with_replacement_preserves_the_budget() {
        let alloc = Allocation::with_replacement(40, 7, &mut rng::stream(2, 0)).unwrap();
        assert_eq!(alloc.total(), 40);
        assert_eq!(alloc.num_instances(), 7);
    }

    #[test]
    fn constructors_are_deterministic_per_stream() {
        for id in 0..4 {
            let a = Allocation::with_replacement(20, 5, &mut rng::stream(9, id)).unwrap();
            let b = Allocation::with_replacement(20, 5, &mut rng::stream(9, id)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn zero_instances_is_rejected_everywhere() {
        let r = &mut rng::stream(0, 0);
        assert!(Allocation::even(1, 0, r).is_err());
        assert!(Allocation::batched(1, 0, 5, r).is_err());
        assert!(Allocation::with_replacement(1, 0, r).is_err());
    }

    #[test]
    fn zero_budget_allocates_nothing() {
        let alloc = Allocation::even(0, 3, &mut rng::stream(0, 0)).unwrap();
        assert_eq!(alloc.counts(), [0, 0, 0]);
        assert_eq!(alloc.max_count(), 0);
        assert_eq!(alloc.sum_of_squares(), 0);
    }
}
