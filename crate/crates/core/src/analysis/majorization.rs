//! Empirical check that the step distribution is the worst case among
//! `(a, b)`-biased distributions for d-WeakMemory runs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::run_probs::exact_run_probs;
use crate::error::Result;
use crate::load::{majorizes, prefix_dominates};
use crate::sampling::SamplingDistribution;

/// Random `(a, b)`-biased distribution: i.i.d. uniform masses in
/// `[1/(an), b/n]`, then shrunk toward the bound on the far side of the
/// deficit so that the sum becomes one while every entry stays in range.
pub fn random_biased<R: Rng + ?Sized>(a: f64, b: f64, n: usize, rng: &mut R) -> Result<SamplingDistribution> {
    let nf = n as f64;
    let (lo, hi) = (1.0 / (a * nf), b / nf);
    let mut x: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
    let s: f64 = x.iter().sum();
    if s > 1.0 {
        let k = (1.0 - nf * lo) / (s - nf * lo);
        x.iter_mut().for_each(|v| *v = lo + (*v - lo) * k);
    } else if s < 1.0 {
        let k = (nf * hi - 1.0) / (nf * hi - s);
        x.iter_mut().for_each(|v| *v = hi - (hi - *v) * k);
    }
    SamplingDistribution::biased(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorizationReport {
    pub a: f64,
    pub b: f64,
    pub n: usize,
    pub d: usize,
    pub checked: usize,
    /// Candidates rejected because they are not `(a, b)`-biased.
    pub rejected: usize,
    /// Indices where a rank-ordered prefix sum of the step vector falls short.
    pub prefix_counterexamples: Vec<usize>,
    /// Indices where the comparison fails after re-sorting both vectors by
    /// value. Informational: expected-ball vectors grow toward light ranks, so
    /// value order is not rank order.
    pub sorted_counterexamples: Vec<usize>,
    /// Expected balls per rank under the step distribution.
    pub step_expected: Vec<f64>,
}

impl MajorizationReport {
    /// Majorization over rank-ordered prefixes (heaviest rank first).
    pub fn holds(&self) -> bool {
        self.prefix_counterexamples.is_empty()
    }
}

/// Compares the expected-balls vector of the `(a, b)`-step distribution
/// against each candidate (ranks follow bin ids, bin 0 heaviest). Candidates
/// outside the `(a, b)` bounds are rejected before comparison.
pub fn check_step_majorizes(
    a: f64,
    b: f64,
    d: usize,
    candidates: &[SamplingDistribution],
    n: usize,
) -> Result<MajorizationReport> {
    let step = SamplingDistribution::step(a, b, n)?;
    let step_expected = exact_run_probs(step.probs(), d)?.expected_balls();
    let mut report = MajorizationReport {
        a,
        b,
        n,
        d,
        checked: 0,
        rejected: 0,
        prefix_counterexamples: Vec::new(),
        sorted_counterexamples: Vec::new(),
        step_expected: step_expected.clone(),
    };
    for (idx, mu) in candidates.iter().enumerate() {
        if mu.n() != n || !mu.is_biased_within(a, b) {
            report.rejected += 1;
            continue;
        }
        report.checked += 1;
        let expected = exact_run_probs(mu.probs(), d)?.expected_balls();
        if prefix_dominates(&step_expected, &expected)?.is_some() {
            report.prefix_counterexamples.push(idx);
        }
        if !majorizes(&step_expected, &expected)? {
            report.sorted_counterexamples.push(idx);
        }
    }
    Ok(report)
}

/// Draws `count` random `(a, b)`-biased distributions and runs
/// [`check_step_majorizes`] on them.
pub fn majorization_check_step_vs_biased<R: Rng + ?Sized>(
    a: f64,
    b: f64,
    n: usize,
    d: usize,
    count: usize,
    rng: &mut R,
) -> Result<MajorizationReport> {
    let candidates = (0..count).map(|_| random_biased(a, b, n, rng)).collect::<Result<Vec<_>>>()?;
    check_step_majorizes(a, b, d, &candidates, n)
}
