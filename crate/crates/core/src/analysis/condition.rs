//! Prefix/suffix bias condition on allocation vectors and the run length
//! that guarantees it for step distributions.

use serde::{Deserialize, Serialize};

use crate::analysis::run_probs::AllocationVector;
use crate::error::{BallocError, Result};

pub const C1_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum C1Family {
    Prefix,
    Suffix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct C1Report {
    pub pass: bool,
    pub delta: f64,
    pub eps: f64,
    /// 1-based index of the first violated inequality.
    pub first_violation: Option<usize>,
    pub family: Option<C1Family>,
}

fn check_unit_interval(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x < 1.0) {
        return Err(BallocError::InvalidParameter(format!("{name} = {x} outside (0, 1)")));
    }
    Ok(())
}

/// Ranges of 1-based `k` for the two families: prefix for `k <= δn`, suffix
/// for `k >= δn + 1`.
fn families(n: usize, delta: f64) -> (impl Iterator<Item = usize>, impl Iterator<Item = usize>) {
    let dn = delta * n as f64;
    let prefix = (1..=n).filter(move |&k| k as f64 <= dn + C1_SLACK);
    let suffix = (1..=n).filter(move |&k| k as f64 >= dn + 1.0 - C1_SLACK);
    (prefix, suffix)
}

fn suffix_sums(p: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; p.len() + 1];
    for i in (0..p.len()).rev() {
        s[i] = s[i + 1] + p[i];
    }
    s
}

fn prefix_sums(p: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; p.len() + 1];
    for i in 0..p.len() {
        s[i + 1] = s[i] + p[i];
    }
    s
}

/// Checks `Σ_{i<=k} p_i <= (1-ε)k/n` for `k <= δn` and
/// `Σ_{i>=k} p_i >= (1 + εδ/(1-δ))(n-k+1)/n` for `k >= δn + 1`.
pub fn c1_check(p: &AllocationVector, delta: f64, eps: f64) -> Result<C1Report> {
    check_unit_interval("delta", delta)?;
    check_unit_interval("eps", eps)?;
    let v = p.as_slice();
    let n = v.len();
    let nf = n as f64;
    let pre = prefix_sums(v);
    let suf = suffix_sums(v);
    let (prefix, suffix) = families(n, delta);
    let mut worst: Option<(usize, C1Family)> = None;
    for k in prefix {
        if pre[k] > (1.0 - eps) * k as f64 / nf + C1_SLACK {
            worst = Some((k, C1Family::Prefix));
            break;
        }
    }
    let boost = 1.0 + eps * delta / (1.0 - delta);
    for k in suffix {
        if suf[k - 1] < boost * (n - k + 1) as f64 / nf - C1_SLACK {
            if worst.is_none_or(|(w, _)| k < w) {
                worst = Some((k, C1Family::Suffix));
            }
            break;
        }
    }
    Ok(C1Report {
        pass: worst.is_none(),
        delta,
        eps,
        first_violation: worst.map(|w| w.0),
        family: worst.map(|w| w.1),
    })
}

/// Largest `ε` allowed by every inequality (capped below 1). A non-positive
/// value means the vector fails for every `ε > 0`.
pub fn c1_max_eps(p: &AllocationVector, delta: f64) -> Result<f64> {
    check_unit_interval("delta", delta)?;
    let v = p.as_slice();
    let n = v.len();
    let nf = n as f64;
    let pre = prefix_sums(v);
    let suf = suffix_sums(v);
    let (prefix, suffix) = families(n, delta);
    let mut best = 1.0f64;
    for k in prefix {
        best = best.min(1.0 - nf * pre[k] / k as f64);
    }
    for k in suffix {
        let ratio = nf * suf[k - 1] / (n - k + 1) as f64;
        best = best.min((ratio - 1.0) * (1.0 - delta) / delta);
    }
    Ok(best)
}

/// `⌈2b(ab-1)² / ((b-1)²(1-ε))⌉`, at least 2.
pub fn min_d_for_c1(a: f64, b: f64, eps: f64) -> Result<usize> {
    if !(b > 1.0) {
        return Err(BallocError::InvalidParameter(format!(
            "run-length bound needs b > 1 (got b = {b})"
        )));
    }
    if !(a > 1.0) {
        return Err(BallocError::InvalidParameter(format!("run-length bound needs a > 1 (got a = {a})")));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(BallocError::InvalidParameter(format!("eps = {eps} outside [0, 1)")));
    }
    let raw = 2.0 * b * (a * b - 1.0).powi(2) / ((b - 1.0).powi(2) * (1.0 - eps));
    Ok(((raw - 1e-9).ceil() as usize).max(2))
}

/// `δ = (a-1)/(ab-1)`, the heavy fraction of the step distribution.
pub fn step_delta(a: f64, b: f64) -> f64 {
    (a - 1.0) / (a * b - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::run_probs::twochoice_allocation_vector;

    #[test]
    fn uniform_fails_for_positive_eps() {
        let u = AllocationVector(vec![0.125; 8]);
        let r = c1_check(&u, 0.25, 0.01).unwrap();
        assert!(!r.pass);
        assert_eq!(r.first_violation, Some(1));
        assert!(c1_max_eps(&u, 0.25).unwrap().abs() < 1e-12);
    }

    #[test]
    fn twochoice_passes_quarter_half() {
        for n in [16, 64, 256] {
            let v = twochoice_allocation_vector(n).unwrap();
            assert!(c1_check(&v, 0.25, 0.5).unwrap().pass, "n = {n}");
            assert!(c1_max_eps(&v, 0.25).unwrap() >= 0.5 - 1e-12);
        }
    }

    #[test]
    fn reversed_twochoice_fails_at_one() {
        let v = twochoice_allocation_vector(64).unwrap().reversed();
        let r = c1_check(&v, 0.25, 0.5).unwrap();
        assert_eq!(r.first_violation, Some(1));
        assert_eq!(r.family, Some(C1Family::Prefix));
    }

    #[test]
    fn run_length_threshold() {
        assert_eq!(min_d_for_c1(2.0, 2.0, 0.5).unwrap(), 72);
        assert_eq!(min_d_for_c1(2.0, 2.0, 0.0).unwrap(), 36);
        assert!(min_d_for_c1(2.0, 1.0, 0.5).is_err());
        assert!(min_d_for_c1(2.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn parameter_ranges() {
        let v = twochoice_allocation_vector(4).unwrap();
        assert!(c1_check(&v, 0.0, 0.5).is_err());
        assert!(c1_check(&v, 0.25, 1.0).is_err());
    }
}
