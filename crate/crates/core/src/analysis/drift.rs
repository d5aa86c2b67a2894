//! Numerical checks of the hyperbolic-cosine drop inequality
//! `E[Γ^{t+d}] <= Γ^t (1 - α/(cn)) + cα` for the Memory family.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::run_probs::ENUMERATION_CAP;
use crate::error::{BallocError, Result};
use crate::load::{gap, LoadVector};
use crate::potential::gamma_from_loads;
use crate::process::{Process, ProcessState};
use crate::sampling::SamplingDistribution;

pub const MIN_MC_TRIALS: u64 = 10_000;

/// Loads plus cache at a run boundary (step counter 0).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriftState {
    pub loads: Vec<u64>,
    pub cache: Option<usize>,
}

impl DriftState {
    pub fn to_process_state(&self) -> Result<ProcessState<u64>> {
        ProcessState::from_parts(LoadVector::from_loads(self.loads.clone())?, self.cache, 0)
    }

    pub fn gap(&self) -> Result<f64> {
        Ok(gap(&LoadVector::from_loads(self.loads.clone())?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDrift {
    pub gap: f64,
    pub gamma_now: f64,
    pub gamma_next: f64,
    /// Standard error of `gamma_next` (Monte Carlo only).
    pub stderr: Option<f64>,
    pub decreased: bool,
    /// Smallest `c` that makes the inequality hold for this state.
    pub c_needed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub process: String,
    pub alpha: f64,
    pub d: usize,
    pub mode: String,
    pub gap_threshold: f64,
    pub states: Vec<StateDrift>,
    /// `max(1, max_state c_needed)`.
    pub c_min: f64,
    /// Every state with gap at or above the threshold shows a strict decrease.
    pub all_decrease_above_threshold: bool,
    /// Monte Carlo only: states whose 4σ interval lies entirely at or above Γ^t.
    pub contradicting: Vec<usize>,
    /// Monte Carlo only: states whose 4σ interval lies entirely below Γ^t.
    pub confirmed: Vec<usize>,
}

fn check_process(p: Process) -> Result<()> {
    p.validate()?;
    match p {
        Process::Memory | Process::WeakMemory { .. } | Process::ResetMemory { .. } => Ok(()),
        other => Err(BallocError::InvalidProcess(format!(
            "drift check supports memory, weak-memory and reset-memory, not {other}"
        ))),
    }
}

fn apply(p: Process, st: &mut ProcessState<u64>, i: usize) {
    match p {
        Process::Memory => {
            st.apply_memory(i, 1);
        }
        Process::WeakMemory { d } => {
            st.apply_weak_memory(d, i, 1);
        }
        Process::ResetMemory { d } => {
            st.apply_reset_memory(d, i, 1);
        }
        _ => unreachable!("checked by check_process"),
    }
}

/// Positive root of `αc² + (Γ - E)c - Γα/n = 0`.
fn c_needed(gamma_now: f64, gamma_next: f64, alpha: f64, n: usize) -> f64 {
    let lin = gamma_now - gamma_next;
    let konst = gamma_now * alpha / n as f64;
    (-lin + (lin * lin + 4.0 * alpha * konst).sqrt()) / (2.0 * alpha)
}

fn exact_expectation(
    p: Process,
    dist: &SamplingDistribution,
    alpha: f64,
    steps: usize,
    st: &ProcessState<u64>,
) -> f64 {
    if steps == 0 {
        return gamma_from_loads(st.loads(), alpha);
    }
    let mut acc = 0.0;
    for (i, &s) in dist.probs().iter().enumerate() {
        if s == 0.0 {
            continue;
        }
        let mut next = st.clone();
        apply(p, &mut next, i);
        acc += s * exact_expectation(p, dist, alpha, steps - 1, &next);
    }
    acc
}

fn validate_inputs(dist: &SamplingDistribution, alpha: f64, d: usize, states: &[DriftState]) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(BallocError::InvalidParameter(format!("alpha = {alpha} must be positive")));
    }
    if d == 0 {
        return Err(BallocError::InvalidParameter("d must be at least 1".into()));
    }
    for s in states {
        if s.loads.len() != dist.n() {
            return Err(BallocError::LengthMismatch { left: s.loads.len(), right: dist.n() });
        }
    }
    Ok(())
}

fn finish(
    p: Process,
    alpha: f64,
    d: usize,
    mode: &str,
    gap_threshold: f64,
    states: Vec<StateDrift>,
) -> DriftReport {
    let c_min = states.iter().map(|s| s.c_needed).fold(1.0, f64::max);
    let all = states.iter().filter(|s| s.gap >= gap_threshold).all(|s| s.decreased);
    DriftReport {
        process: p.to_string(),
        alpha,
        d,
        mode: mode.into(),
        gap_threshold,
        states,
        c_min,
        all_decrease_above_threshold: all,
        contradicting: Vec::new(),
        confirmed: Vec::new(),
    }
}

/// Exact `E[Γ^{t+d}]` for each state by enumerating all `n^d` sample
/// sequences.
pub fn verify_drop_exact(
    p: Process,
    dist: &SamplingDistribution,
    alpha: f64,
    d: usize,
    states: &[DriftState],
    gap_threshold: f64,
) -> Result<DriftReport> {
    check_process(p)?;
    validate_inputs(dist, alpha, d, states)?;
    let needed = (dist.n() as f64).powi(d as i32);
    if needed > ENUMERATION_CAP as f64 {
        return Err(BallocError::EnumerationCap { needed, cap: ENUMERATION_CAP });
    }
    let n = dist.n();
    let mut out = Vec::with_capacity(states.len());
    for s in states {
        let st = s.to_process_state()?;
        let g0 = gamma_from_loads(st.loads(), alpha);
        let g1 = exact_expectation(p, dist, alpha, d, &st);
        out.push(StateDrift {
            gap: s.gap()?,
            gamma_now: g0,
            gamma_next: g1,
            stderr: None,
            decreased: g1 < g0,
            c_needed: c_needed(g0, g1, alpha, n),
        });
    }
    Ok(finish(p, alpha, d, "exact", gap_threshold, out))
}

/// Monte Carlo estimate of `E[Γ^{t+d}]` per state.
#[allow(clippy::too_many_arguments)]
pub fn verify_drop_mc<R: Rng + ?Sized>(
    p: Process,
    dist: &SamplingDistribution,
    alpha: f64,
    d: usize,
    states: &[DriftState],
    gap_threshold: f64,
    trials: u64,
    rng: &mut R,
) -> Result<DriftReport> {
    check_process(p)?;
    validate_inputs(dist, alpha, d, states)?;
    if trials < MIN_MC_TRIALS {
        return Err(BallocError::InvalidParameter(format!(
            "trials = {trials} below the minimum of {MIN_MC_TRIALS}"
        )));
    }
    let n = dist.n();
    let mut out = Vec::with_capacity(states.len());
    let (mut contradicting, mut confirmed) = (Vec::new(), Vec::new());
    for (idx, s) in states.iter().enumerate() {
        let st = s.to_process_state()?;
        let g0 = gamma_from_loads(st.loads(), alpha);
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..trials {
            let mut cur = st.clone();
            for _ in 0..d {
                let i = dist.sample(rng);
                apply(p, &mut cur, i);
            }
            let g = gamma_from_loads(cur.loads(), alpha);
            sum += g;
            sq += g * g;
        }
        let t = trials as f64;
        let mean = sum / t;
        let var = ((sq / t - mean * mean) * t / (t - 1.0)).max(0.0);
        let se = (var / t).sqrt();
        if mean - 4.0 * se >= g0 {
            contradicting.push(idx);
        }
        if mean + 4.0 * se < g0 {
            confirmed.push(idx);
        }
        out.push(StateDrift {
            gap: s.gap()?,
            gamma_now: g0,
            gamma_next: mean,
            stderr: Some(se),
            decreased: mean < g0,
            c_needed: c_needed(g0, mean, alpha, n),
        });
    }
    let mut rep = finish(p, alpha, d, "mc", gap_threshold, out);
    rep.contradicting = contradicting;
    rep.confirmed = confirmed;
    Ok(rep)
}

/// Random states with gap at least `gap_min`: small uniform base loads, then
/// the heaviest bin is raised until the gap threshold is met. The cache is a
/// least-loaded bin.
pub fn random_drift_states<R: Rng + ?Sized>(
    n: usize,
    count: usize,
    gap_min: f64,
    rng: &mut R,
) -> Result<Vec<DriftState>> {
    if n < 2 && gap_min > 0.0 {
        return Err(BallocError::InvalidParameter("a positive gap needs at least two bins".into()));
    }
    let top = gap_min.max(0.0).ceil() as u64 + 2;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut lv = LoadVector::from_loads((0..n).map(|_| rng.random_range(0..=top)).collect())?;
        while gap(&lv) < gap_min {
            let max = lv.max_load();
            let i = lv.loads().iter().position(|&x| x == max).expect("n >= 1");
            lv.add(i, 1);
        }
        out.push(DriftState { cache: Some(lv.argmin()), loads: lv.loads().to_vec() });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::rng_from_seed;
    use approx::assert_relative_eq;

    #[test]
    fn c_needed_solves_the_inequality() {
        let (g0, g1, a, n) = (100.0, 99.0, 0.3, 8);
        let c = c_needed(g0, g1, a, n);
        let rhs = g0 * (1.0 - a / (c * n as f64)) + c * a;
        assert_relative_eq!(rhs, g1, max_relative = 1e-12);
    }

    #[test]
    fn balanced_state_has_finite_c() {
        let dist = SamplingDistribution::uniform(4).unwrap();
        let st = DriftState { loads: vec![3; 4], cache: Some(0) };
        let r = verify_drop_exact(Process::Memory, &dist, 0.3, 2, &[st], 5.0).unwrap();
        assert!(r.c_min.is_finite() && r.c_min >= 1.0);
        assert_relative_eq!(r.states[0].gamma_now, 8.0);
    }

    #[test]
    fn single_step_matches_hand_sum() {
        // n = 2, loads (1, 0), cache on bin 1: Memory always allocates to bin 1.
        let dist = SamplingDistribution::uniform(2).unwrap();
        let st = DriftState { loads: vec![1, 0], cache: Some(1) };
        let r = verify_drop_exact(Process::Memory, &dist, 0.5, 1, &[st], 0.0).unwrap();
        // after: loads (1, 1), all normalized loads 0
        assert_relative_eq!(r.states[0].gamma_next, 4.0, max_relative = 1e-12);
    }

    #[test]
    fn random_states_meet_gap() {
        let states = random_drift_states(8, 50, 5.0, &mut rng_from_seed(1)).unwrap();
        for s in &states {
            assert!(s.gap().unwrap() >= 5.0);
            let min = *s.loads.iter().min().unwrap();
            assert_eq!(s.loads[s.cache.unwrap()], min);
        }
    }

    #[test]
    fn rejects_dchoice_and_small_trials() {
        let dist = SamplingDistribution::uniform(4).unwrap();
        let st = vec![DriftState { loads: vec![0; 4], cache: Some(0) }];
        assert!(verify_drop_exact(Process::two_choice(), &dist, 0.3, 2, &st, 0.0).is_err());
        let mut rng = rng_from_seed(0);
        assert!(verify_drop_mc(Process::Memory, &dist, 0.3, 2, &st, 0.0, 0, &mut rng).is_err());
    }

    #[test]
    fn mc_agrees_with_exact() {
        let dist = SamplingDistribution::uniform(8).unwrap();
        let mut rng = rng_from_seed(17);
        let states = random_drift_states(8, 5, 5.0, &mut rng).unwrap();
        let p = Process::WeakMemory { d: 3 };
        let ex = verify_drop_exact(p, &dist, 0.3, 3, &states, 5.0).unwrap();
        let mc = verify_drop_mc(p, &dist, 0.3, 3, &states, 5.0, 20_000, &mut rng).unwrap();
        for (e, m) in ex.states.iter().zip(&mc.states) {
            let se = m.stderr.unwrap();
            assert!((e.gamma_next - m.gamma_next).abs() <= 4.0 * se, "{} vs {} ± {}", e.gamma_next, m.gamma_next, se);
        }
    }
}
