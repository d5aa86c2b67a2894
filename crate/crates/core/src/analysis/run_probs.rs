//! Per-run allocation probabilities of d-WeakMemory in rank space.
//!
//! Ranks are 0-based positions of a frozen ordering, heaviest first. A run
//! starts by allocating to its first sample and caching it; every later
//! sample replaces the cache (and receives the ball) only when it is ranked
//! strictly lighter than the cached bin.

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{BallocError, Result};
use crate::load::Ordering;
use crate::sampling::SamplingDistribution;

/// Largest number of sample sequences the exact enumerators accept.
pub const ENUMERATION_CAP: u64 = 10_000_000;

/// `p[i][j]`: probability that the rank-`i` bin receives `j` balls in one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunProbMatrix {
    pub n: usize,
    pub d: usize,
    pub p: Vec<Vec<f64>>,
    /// Per-entry standard errors, present for Monte-Carlo estimates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<Vec<Vec<f64>>>,
}

impl RunProbMatrix {
    /// Expected number of balls the rank-`i` bin receives in one run.
    pub fn expected_balls(&self) -> Vec<f64> {
        self.p
            .iter()
            .map(|row| row.iter().enumerate().map(|(j, q)| j as f64 * q).sum())
            .collect()
    }

    pub fn max_row_sum_error(&self) -> f64 {
        self.p.iter().map(|row| (row.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `|Σ_i E[balls to rank i] - d|`.
    pub fn conservation_error(&self) -> f64 {
        (self.expected_balls().iter().sum::<f64>() - self.d as f64).abs()
    }

    pub fn max_abs_diff(&self, other: &RunProbMatrix) -> f64 {
        self.p
            .iter()
            .flatten()
            .zip(other.p.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Non-negative vector over ranks summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationVector(pub Vec<f64>);

impl AllocationVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() || p.iter().any(|x| !(*x >= 0.0)) {
            return Err(BallocError::InvalidParameter(
                "allocation vector must be non-empty and non-negative".into(),
            ));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(BallocError::InvalidParameter(format!("allocation vector sums to {s}")));
        }
        Ok(Self(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn reversed(&self) -> Self {
        let mut v = self.0.clone();
        v.reverse();
        Self(v)
    }
}

/// Sampling mass of each rank: `masses[i] = s_{σ⁻¹(i)}`.
pub fn rank_masses(dist: &SamplingDistribution, sigma: &Ordering) -> Result<Vec<f64>> {
    if sigma.n() != dist.n() {
        return Err(BallocError::LengthMismatch { left: dist.n(), right: sigma.n() });
    }
    Ok((0..dist.n()).map(|r| dist.prob(sigma.bin_at(r))).collect())
}

fn check_d(d: usize) -> Result<()> {
    if d == 0 {
        return Err(BallocError::InvalidParameter("d must be at least 1".into()));
    }
    Ok(())
}

fn fill_zero_column(p: &mut [Vec<f64>]) {
    for row in p.iter_mut() {
        let s: f64 = row[1..].iter().sum();
        row[0] = 1.0 - s;
    }
}

/// Closed form `e·g^{j-1}·[1 - e/(1-f)·(1 - f^{d-j})]` with rank masses
/// `e`, strictly-heavier mass `f`, and `g = f + e`.
pub fn weak_memory_run_probs_closed(masses: &[f64], d: usize) -> Result<RunProbMatrix> {
    check_d(d)?;
    let n = masses.len();
    let mut p = vec![vec![0.0; d + 1]; n];
    let mut heavier = 0.0;
    for (i, &e) in masses.iter().enumerate() {
        let f = heavier;
        let g = f + e;
        let escape = if 1.0 - f > 0.0 { e / (1.0 - f) } else { 1.0 };
        for j in 1..=d {
            // powi(0) == 1 also at f == 0
            let tail = 1.0 - f.powi((d - j) as i32);
            p[i][j] = e * g.powi(j as i32 - 1) * (1.0 - escape * tail);
        }
        heavier += e;
    }
    fill_zero_column(&mut p);
    Ok(RunProbMatrix { n, d, p, stderr: None })
}

/// Convenience wrapper ranking bins by id (bin 0 heaviest).
pub fn weak_memory_run_probs_closed_for(dist: &SamplingDistribution, d: usize) -> Result<RunProbMatrix> {
    weak_memory_run_probs_closed(dist.probs(), d)
}

fn enumeration_size(n: usize, d: usize) -> Result<()> {
    let needed = (n as f64).powi(d as i32);
    if needed > ENUMERATION_CAP as f64 {
        return Err(BallocError::EnumerationCap { needed, cap: ENUMERATION_CAP });
    }
    Ok(())
}

/// Brute-force oracle: walks every length-`d` sequence of ranks, replays the
/// run rules, and weights each outcome by the product of masses.
pub fn exact_run_probs(masses: &[f64], d: usize) -> Result<RunProbMatrix> {
    check_d(d)?;
    let n = masses.len();
    enumeration_size(n, d)?;
    let mut p = vec![vec![0.0; d + 1]; n];
    let mut allocs = Vec::with_capacity(d);

    fn walk(
        masses: &[f64],
        d: usize,
        cache: usize,
        prob: f64,
        allocs: &mut Vec<usize>,
        p: &mut [Vec<f64>],
    ) {
        if allocs.len() == d {
            let mut seen: Vec<usize> = Vec::with_capacity(d);
            for &r in allocs.iter() {
                if !seen.contains(&r) {
                    seen.push(r);
                    let count = allocs.iter().filter(|&&x| x == r).count();
                    p[r][count] += prob;
                }
            }
            return;
        }
        for (r, &m) in masses.iter().enumerate() {
            let next = if allocs.is_empty() || r > cache { r } else { cache };
            allocs.push(next);
            walk(masses, d, next, prob * m, allocs, p);
            allocs.pop();
        }
    }

    walk(masses, d, 0, 1.0, &mut allocs, &mut p);
    fill_zero_column(&mut p);
    Ok(RunProbMatrix { n, d, p, stderr: None })
}

/// Monte-Carlo estimate with binomial standard errors per entry.
pub fn mc_run_probs<R: Rng + ?Sized>(
    masses: &[f64],
    d: usize,
    trials: u64,
    rng: &mut R,
) -> Result<RunProbMatrix> {
    check_d(d)?;
    if trials == 0 {
        return Err(BallocError::InvalidParameter("trials must be at least 1".into()));
    }
    let n = masses.len();
    let alias = WeightedAliasIndex::new(masses.to_vec())
        .map_err(|e| BallocError::InvalidDistribution(e.to_string()))?;
    let mut counts = vec![vec![0u64; d + 1]; n];
    let mut per_run = vec![0usize; n];
    let mut touched = Vec::with_capacity(d);
    for _ in 0..trials {
        let mut cache = alias.sample(rng);
        per_run[cache] += 1;
        touched.push(cache);
        for _ in 1..d {
            let r = alias.sample(rng);
            if r > cache {
                cache = r;
                touched.push(r);
            }
            per_run[cache] += 1;
        }
        for &r in &touched {
            counts[r][per_run[r]] += 1;
            per_run[r] = 0;
        }
        touched.clear();
    }
    let t = trials as f64;
    let mut p = vec![vec![0.0; d + 1]; n];
    let mut se = vec![vec![0.0; d + 1]; n];
    for i in 0..n {
        let hit: u64 = counts[i][1..].iter().sum();
        counts[i][0] = trials - hit;
        for j in 0..=d {
            let q = counts[i][j] as f64 / t;
            p[i][j] = q;
            se[i][j] = (q * (1.0 - q) / t).sqrt();
        }
    }
    Ok(RunProbMatrix { n, d, p, stderr: Some(se) })
}

/// `p̂_i = (1/d) Σ_j j · p̂_{i,j}`.
pub fn proxy_allocation_vector(rp: &RunProbMatrix) -> AllocationVector {
    let d = rp.d as f64;
    AllocationVector(rp.expected_balls().into_iter().map(|e| e / d).collect())
}

/// TwoChoice on uniform sampling: `p_i = (2i - 1)/n²` for 1-based rank `i`.
pub fn twochoice_allocation_vector(n: usize) -> Result<AllocationVector> {
    dchoice_allocation_vector(n, 2)
}

/// d-Choice on uniform sampling: `p_i = (i^d - (i-1)^d) / n^d`.
pub fn dchoice_allocation_vector(n: usize, d: usize) -> Result<AllocationVector> {
    if n == 0 || d == 0 {
        return Err(BallocError::InvalidParameter("n and d must be at least 1".into()));
    }
    let nd = (n as f64).powi(d as i32);
    Ok(AllocationVector(
        (1..=n)
            .map(|i| ((i as f64).powi(d as i32) - ((i - 1) as f64).powi(d as i32)) / nd)
            .collect(),
    ))
}
