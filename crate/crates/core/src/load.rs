//! Load vectors, normalized loads, orderings by load, and majorization.
//!
//! Bins are indexed from 0. A [`LoadVector`] is generic over its load type so
//! that unit-weight processes keep exact integer counts while weighted
//! processes accumulate real-valued loads.

use std::fmt::Debug;
use std::ops::AddAssign;

use crate::error::{BallocError, Result};

/// Slack used when comparing prefix sums in [`majorizes`].
pub const MAJORIZATION_SLACK: f64 = 1e-12;

/// Relative tolerance for the conservation check on real-valued loads.
pub const WEIGHT_REL_TOL: f64 = 1e-9;

/// Scalar stored per bin: `u64` for unit balls, `f64` for weighted balls.
pub trait Load: Copy + Debug + Default + PartialOrd + AddAssign + Send + Sync + 'static {
    const UNIT: Self;

    fn to_f64(self) -> f64;

    fn from_weight(w: f64) -> Self;

    fn is_nonneg(self) -> bool;

    /// Whether `sum` matches `total` under the mode's tolerance.
    fn sum_matches(sum: Self, total: Self) -> bool;
}

impl Load for u64 {
    const UNIT: Self = 1;

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn from_weight(w: f64) -> Self {
        debug_assert!(w == 1.0, "integer loads only accept unit weights");
        1
    }

    fn is_nonneg(self) -> bool {
        true
    }

    fn sum_matches(sum: Self, total: Self) -> bool {
        sum == total
    }
}

impl Load for f64 {
    const UNIT: Self = 1.0;

    fn to_f64(self) -> f64 {
        self
    }

    fn from_weight(w: f64) -> Self {
        w
    }

    fn is_nonneg(self) -> bool {
        self >= 0.0
    }

    fn sum_matches(sum: Self, total: Self) -> bool {
        (sum - total).abs() <= WEIGHT_REL_TOL * total.abs().max(1.0)
    }
}

/// Per-bin loads together with the total allocated weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadVector<L: Load = u64> {
    loads: Vec<L>,
    total: L,
}

impl<L: Load> LoadVector<L> {
    /// Empty system of `n` bins.
    pub fn zeros(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(BallocError::InvalidLoads("n must be at least 1".into()));
        }
        Ok(Self { loads: vec![L::default(); n], total: L::default() })
    }

    /// Builds a load vector, deriving the total from the loads.
    pub fn from_loads(loads: Vec<L>) -> Result<Self> {
        if loads.is_empty() {
            return Err(BallocError::InvalidLoads("n must be at least 1".into()));
        }
        let mut total = L::default();
        for &x in &loads {
            if !x.is_nonneg() {
                return Err(BallocError::InvalidLoads(format!("negative load {x:?}")));
            }
            total += x;
        }
        Ok(Self { loads, total })
    }

    pub fn n(&self) -> usize {
        self.loads.len()
    }

    pub fn loads(&self) -> &[L] {
        &self.loads
    }

    pub fn load(&self, bin: usize) -> L {
        self.loads[bin]
    }

    pub fn total(&self) -> L {
        self.total
    }

    pub fn average(&self) -> f64 {
        self.total.to_f64() / self.n() as f64
    }

    /// Adds `w` to `bin` and to the total.
    pub fn add(&mut self, bin: usize, w: L) {
        self.loads[bin] += w;
        self.total += w;
    }

    /// Checks the stored total against the recomputed sum.
    pub fn validate(&self) -> Result<()> {
        let mut sum = L::default();
        for &x in &self.loads {
            if !x.is_nonneg() {
                return Err(BallocError::InvalidLoads(format!("negative load {x:?}")));
            }
            sum += x;
        }
        if !L::sum_matches(sum, self.total) {
            return Err(BallocError::InvalidLoads(format!(
                "sum {sum:?} does not match total {:?}",
                self.total
            )));
        }
        Ok(())
    }

    pub fn max_load(&self) -> L {
        let mut it = self.loads.iter().copied();
        let first = it.next().expect("n >= 1");
        it.fold(first, |m, x| if x > m { x } else { m })
    }

    pub fn min_load(&self) -> L {
        let mut it = self.loads.iter().copied();
        let first = it.next().expect("n >= 1");
        it.fold(first, |m, x| if x < m { x } else { m })
    }

    /// Lowest-id bin attaining the minimum load.
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, &x) in self.loads.iter().enumerate() {
            if x < self.loads[best] {
                best = i;
            }
        }
        best
    }

    pub fn to_f64_vec(&self) -> Vec<f64> {
        self.loads.iter().map(|x| x.to_f64()).collect()
    }
}

impl LoadVector<u64> {
    /// Converts integer loads to real loads (used by potentials and weighted paths).
    pub fn to_real(&self) -> LoadVector<f64> {
        LoadVector { loads: self.to_f64_vec(), total: self.total as f64 }
    }
}

/// Loads minus the running average, sorted non-increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedLoads(Vec<f64>);

impl NormalizedLoads {
    /// Wraps an arbitrary real vector, sorting it non-increasing. Used by
    /// callers that already hold normalized values (e.g. potential tests).
    pub fn from_values(mut y: Vec<f64>) -> Self {
        y.sort_by(|a, b| b.total_cmp(a));
        Self(y)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.0[0]
    }

    pub fn min(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Normalized load of one bin. `gap` and `normalize` both go through this so
/// that `gap(lv) == normalize(lv)[0]` holds bit-for-bit.
#[inline]
pub fn normalized_value(load: f64, total: f64, n: usize) -> f64 {
    load - total / n as f64
}

pub fn normalize<L: Load>(lv: &LoadVector<L>) -> NormalizedLoads {
    let total = lv.total().to_f64();
    let n = lv.n();
    let y = lv.loads().iter().map(|x| normalized_value(x.to_f64(), total, n)).collect();
    NormalizedLoads::from_values(y)
}

/// Maximum load minus the average load.
pub fn gap<L: Load>(lv: &LoadVector<L>) -> f64 {
    normalized_value(lv.max_load().to_f64(), lv.total().to_f64(), lv.n())
}

/// Permutation of bins by load, heaviest first; equal loads keep ascending bin id.
///
/// `rank_to_bin[r]` is the bin at rank `r` and `bin_to_rank` is its inverse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    rank_to_bin: Vec<usize>,
    bin_to_rank: Vec<usize>,
}

impl Ordering {
    pub fn identity(n: usize) -> Self {
        Self { rank_to_bin: (0..n).collect(), bin_to_rank: (0..n).collect() }
    }

    /// Builds an ordering from an explicit rank → bin list.
    pub fn from_ranks(rank_to_bin: Vec<usize>) -> Result<Self> {
        let n = rank_to_bin.len();
        let mut bin_to_rank = vec![usize::MAX; n];
        for (r, &b) in rank_to_bin.iter().enumerate() {
            if b >= n || bin_to_rank[b] != usize::MAX {
                return Err(BallocError::InvalidParameter(format!(
                    "not a permutation of 0..{n}: {rank_to_bin:?}"
                )));
            }
            bin_to_rank[b] = r;
        }
        Ok(Self { rank_to_bin, bin_to_rank })
    }

    pub fn n(&self) -> usize {
        self.rank_to_bin.len()
    }

    pub fn bin_at(&self, rank: usize) -> usize {
        self.rank_to_bin[rank]
    }

    pub fn rank_of(&self, bin: usize) -> usize {
        self.bin_to_rank[bin]
    }

    pub fn ranks(&self) -> &[usize] {
        &self.rank_to_bin
    }
}

pub fn ordering_by_load<L: Load>(lv: &LoadVector<L>) -> Ordering {
    let loads = lv.loads();
    let mut rank_to_bin: Vec<usize> = (0..loads.len()).collect();
    // stable sort keeps ascending id among ties
    rank_to_bin.sort_by(|&a, &b| {
        loads[b].partial_cmp(&loads[a]).expect("loads are never NaN")
    });
    let mut bin_to_rank = vec![0; loads.len()];
    for (r, &b) in rank_to_bin.iter().enumerate() {
        bin_to_rank[b] = r;
    }
    Ordering { rank_to_bin, bin_to_rank }
}

fn sorted_desc(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Whether `v` majorizes `u`: after sorting both non-increasing, every prefix
/// sum of `v` is at least the matching prefix sum of `u`.
pub fn majorizes(v: &[f64], u: &[f64]) -> Result<bool> {
    if v.len() != u.len() {
        return Err(BallocError::LengthMismatch { left: v.len(), right: u.len() });
    }
    Ok(prefix_dominates(&sorted_desc(v), &sorted_desc(u))?.is_none())
}

/// Prefix sums compared in the given index order, without sorting. Returns the
/// first (0-based) index where `v`'s prefix falls below `u`'s, if any.
pub fn prefix_dominates(v: &[f64], u: &[f64]) -> Result<Option<usize>> {
    if v.len() != u.len() {
        return Err(BallocError::LengthMismatch { left: v.len(), right: u.len() });
    }
    let (mut sv, mut su) = (0.0, 0.0);
    for (k, (a, b)) in v.iter().zip(u).enumerate() {
        sv += a;
        su += b;
        if sv < su - MAJORIZATION_SLACK {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lv(loads: &[u64]) -> LoadVector {
        LoadVector::from_loads(loads.to_vec()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&lv(&[0, 0, 0, 0])).into_vec(), vec![0.0; 4]);
        assert_eq!(normalize(&lv(&[2, 0])).into_vec(), vec![1.0, -1.0]);
        assert_eq!(normalize(&lv(&[3, 1, 0, 0])).into_vec(), vec![2.0, 0.0, -1.0, -1.0]);
    }

    #[test]
    fn gap_examples() {
        assert_eq!(gap(&lv(&[0, 0, 0])), 0.0);
        assert_eq!(gap(&lv(&[2, 0])), 1.0);
        assert_eq!(gap(&lv(&[5, 2, 1, 0])), 3.0);
    }

    #[test]
    fn ordering_examples() {
        assert_eq!(ordering_by_load(&lv(&[0, 0, 0])).ranks(), &[0, 1, 2]);
        // 1-based [2,3,1]
        assert_eq!(ordering_by_load(&lv(&[1, 3, 2])).ranks(), &[1, 2, 0]);
        // 1-based [3,1,2]
        assert_eq!(ordering_by_load(&lv(&[2, 2, 5])).ranks(), &[2, 0, 1]);
        let o = ordering_by_load(&lv(&[2, 2, 5]));
        assert_eq!(o.rank_of(2), 0);
        assert_eq!(o.rank_of(1), 2);
    }

    #[test]
    fn majorization_examples() {
        assert!(majorizes(&[1.0, 0.0, -1.0], &[1.0, 0.0, -1.0]).unwrap());
        assert!(majorizes(&[2.0, 0.0, -2.0], &[1.0, 0.0, -1.0]).unwrap());
        assert!(!majorizes(&[1.0, 0.0, -1.0], &[2.0, 0.0, -2.0]).unwrap());
        assert!(matches!(
            majorizes(&[1.0], &[1.0, 2.0]),
            Err(BallocError::LengthMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn majorizes_sorts_internally() {
        assert!(majorizes(&[-2.0, 0.0, 2.0], &[1.0, -1.0, 0.0]).unwrap());
    }

    #[test]
    fn rejects_empty_and_negative() {
        assert!(LoadVector::<u64>::zeros(0).is_err());
        assert!(LoadVector::<f64>::from_loads(vec![1.0, -0.5]).is_err());
        assert!(LoadVector::<u64>::from_loads(vec![]).is_err());
    }

    #[test]
    fn weighted_conservation_tolerance() {
        let mut w = LoadVector::<f64>::zeros(3).unwrap();
        for k in 0..1000 {
            w.add(k % 3, 0.1 + (k as f64) * 1e-3);
        }
        w.validate().unwrap();
    }

    #[test]
    fn ordering_from_ranks_rejects_non_permutation() {
        assert!(Ordering::from_ranks(vec![0, 0, 1]).is_err());
        assert!(Ordering::from_ranks(vec![0, 3, 1]).is_err());
        let o = Ordering::from_ranks(vec![2, 0, 1]).unwrap();
        assert_eq!(o.rank_of(2), 0);
    }

    proptest! {
        #[test]
        fn gap_is_first_normalized_entry(loads in prop::collection::vec(0u64..50, 1..40)) {
            let v = lv(&loads);
            let y = normalize(&v);
            prop_assert_eq!(gap(&v), y.max());
            prop_assert!(gap(&v) >= 0.0);
            let s: f64 = y.as_slice().iter().sum();
            prop_assert!(s.abs() <= 1e-9 * loads.len() as f64);
            prop_assert!(y.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn normalize_is_permutation_invariant(
            loads in prop::collection::vec(0u64..50, 1..40),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = loads.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(normalize(&lv(&loads)), normalize(&lv(&shuffled)));
        }

        #[test]
        fn ordering_sorts_loads(loads in prop::collection::vec(0u64..20, 1..60)) {
            let v = lv(&loads);
            let o = ordering_by_load(&v);
            let seq: Vec<u64> = o.ranks().iter().map(|&b| loads[b]).collect();
            prop_assert!(seq.windows(2).all(|w| w[0] >= w[1]));
            for r in 0..o.n() {
                prop_assert_eq!(o.rank_of(o.bin_at(r)), r);
            }
        }

        #[test]
        fn majorization_reflexive_and_transitive(
            base in prop::collection::vec(-5.0f64..5.0, 2..12),
            s1 in 1.0f64..3.0,
            s2 in 1.0f64..3.0,
        ) {
            // scaling a zero-sum vector by s >= 1 spreads it out
            let mean = base.iter().sum::<f64>() / base.len() as f64;
            let u: Vec<f64> = base.iter().map(|x| x - mean).collect();
            let v: Vec<f64> = u.iter().map(|x| x * s1).collect();
            let w: Vec<f64> = v.iter().map(|x| x * s2).collect();
            prop_assert!(majorizes(&u, &u).unwrap());
            prop_assert!(majorizes(&v, &u).unwrap());
            prop_assert!(majorizes(&w, &v).unwrap());
            prop_assert!(majorizes(&w, &u).unwrap());
        }
    }

    #[test]
    fn ordering_property_1000_random_vectors() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let n = rng.random_range(1..50);
            let loads: Vec<u64> = (0..n).map(|_| rng.random_range(0..10)).collect();
            let o = ordering_by_load(&lv(&loads));
            assert!(o.ranks().windows(2).all(|w| loads[w[0]] >= loads[w[1]]));
        }
    }
}
