//! Segmentation of a recorded Memory trace into the rounds and phases of the
//! folded process, with a per-step check of the folded allocation rule.

use serde::{Deserialize, Serialize};

use crate::error::{BallocError, Result};
use crate::load::{normalize, normalized_value, LoadVector};
use crate::potential::{dot_phi_j, dot_psi_j, phi_j, psi_j, PotentialConfig};
use crate::trace::{StepEvent, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FoldCase {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Termination {
    #[serde(rename = "caseA")]
    CaseA,
    /// No light sample during the last phase.
    Condition1,
    /// `k_j` phases completed.
    Condition2,
    /// The trace ended inside the round.
    Truncated,
}

/// Half-open range of trace steps `[start, start + len)`; steps are 1-based
/// ball indices as in [`crate::trace::TraceRecord::step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRange {
    pub start: u64,
    pub len: u64,
}

impl StepRange {
    pub fn end(&self) -> u64 {
        self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub start: u64,
    pub len: u64,
    pub case: FoldCase,
    pub phases: Vec<StepRange>,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldViolation {
    pub step: u64,
    pub round: usize,
    pub substep: u64,
    pub case: FoldCase,
    /// Normalized load of the allocated bin before the allocation.
    pub y_allocated: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldedSegmentation {
    pub j: u32,
    pub phase_len: u64,
    pub k_j: u64,
    pub light_threshold: f64,
    pub allocation_bound: f64,
    pub total_steps: u64,
    pub rounds: Vec<Round>,
    pub violations: Vec<FoldViolation>,
}

impl FoldedSegmentation {
    pub fn violation_count(&self) -> usize {
        self.violations.len()
    }

    /// Rounds cover `1..=total_steps` without gaps or overlaps, phases tile
    /// their round, and phase lengths and counts respect the schedule.
    pub fn check_partition(&self) -> Result<()> {
        let bad = |msg: String| Err(BallocError::Report(msg));
        let mut next = 1u64;
        for (r, round) in self.rounds.iter().enumerate() {
            if round.start != next || round.len == 0 {
                return bad(format!("round {r} starts at {} (expected {next})", round.start));
            }
            let last_round = round.start + round.len == self.total_steps + 1;
            match round.case {
                FoldCase::A => {
                    if round.len != 1 || !round.phases.is_empty() || round.termination != Termination::CaseA {
                        return bad(format!("round {r}: malformed Case-A round"));
                    }
                }
                FoldCase::B => {
                    if round.phases.is_empty() || round.phases.len() as u64 > self.k_j {
                        return bad(format!("round {r}: {} phases (k_j = {})", round.phases.len(), self.k_j));
                    }
                    let mut p_next = round.start;
                    for (k, ph) in round.phases.iter().enumerate() {
                        let tail = k + 1 == round.phases.len() && round.termination == Termination::Truncated;
                        if ph.start != p_next || (ph.len != self.phase_len && !(tail && ph.len < self.phase_len)) {
                            return bad(format!("round {r} phase {k}: {:?}", ph));
                        }
                        p_next = ph.end();
                    }
                    if p_next != round.start + round.len {
                        return bad(format!("round {r}: phases do not cover the round"));
                    }
                    if round.termination == Termination::Truncated && !last_round {
                        return bad(format!("round {r}: truncated before the end of the trace"));
                    }
                }
            }
            next = round.start + round.len;
        }
        if next != self.total_steps + 1 {
            return bad(format!("rounds end at {next}, trace has {} steps", self.total_steps));
        }
        Ok(())
    }
}

fn step_events(trace: &Trace) -> Result<Vec<&StepEvent>> {
    if !trace.has_step_events() {
        return Err(BallocError::MissingStepData("record the trace with full per-step events".into()));
    }
    let mut out = Vec::with_capacity(trace.records.len());
    for (k, r) in trace.records.iter().enumerate() {
        let ev = r.event.as_ref().expect("checked above");
        if r.step != k as u64 + 1 || ev.sampled.is_empty() || ev.allocated >= trace.n {
            return Err(BallocError::MissingStepData(format!("malformed event at record {k}")));
        }
        out.push(ev);
    }
    Ok(out)
}

/// Loads replayed from step events, starting from the empty state.
struct Replay {
    loads: Vec<f64>,
    total: f64,
}

impl Replay {
    fn new(n: usize) -> Self {
        Self { loads: vec![0.0; n], total: 0.0 }
    }

    fn y(&self, bin: usize) -> f64 {
        normalized_value(self.loads[bin], self.total, self.loads.len())
    }

    fn apply(&mut self, ev: &StepEvent) {
        self.loads[ev.allocated] += ev.weight;
        self.total += ev.weight;
    }

    fn normalized(&self) -> Vec<f64> {
        let lv = LoadVector::from_loads(self.loads.clone()).expect("replayed loads are valid");
        normalize(&lv).into_vec()
    }
}

/// Splits a full Memory trace into folded-process rounds for layer `j` and
/// checks each allocation against the folded rule. Normalized loads are taken
/// before the allocation of the step they belong to; the first sample of a
/// Case-B round is its substep 0.
pub fn segment_folded(trace: &Trace, j: u32, cfg: &PotentialConfig) -> Result<FoldedSegmentation> {
    cfg.validate()?;
    if j == 0 {
        return Err(BallocError::InvalidParameter("layer j must be at least 1".into()));
    }
    let events = step_events(trace)?;
    let phase_len = cfg.phase_len();
    let k_j = cfg.k(j);
    let light = cfg.light_threshold(j);
    let bound = cfg.allocation_bound(j);
    let mut replay = Replay::new(trace.n);
    let mut rounds = Vec::new();
    let mut violations = Vec::new();
    let total = events.len() as u64;
    let mut t = 0usize;
    while t < events.len() {
        let r = rounds.len();
        let ev = events[t];
        let y_sample = replay.y(ev.sampled[0]);
        if y_sample >= light {
            let y_alloc = replay.y(ev.allocated);
            if y_alloc > y_sample {
                violations.push(FoldViolation {
                    step: t as u64 + 1,
                    round: r,
                    substep: 0,
                    case: FoldCase::A,
                    y_allocated: y_alloc,
                    bound: y_sample,
                });
            }
            replay.apply(ev);
            rounds.push(Round {
                start: t as u64 + 1,
                len: 1,
                case: FoldCase::A,
                phases: Vec::new(),
                termination: Termination::CaseA,
            });
            t += 1;
            continue;
        }
        let start = t;
        let mut phases = Vec::new();
        let termination = loop {
            let p_start = t;
            let mut saw_light = false;
            while t < events.len() && ((t - p_start) as u64) < phase_len {
                let ev = events[t];
                if replay.y(ev.sampled[0]) < light {
                    saw_light = true;
                }
                let y_alloc = replay.y(ev.allocated);
                if y_alloc > bound {
                    violations.push(FoldViolation {
                        step: t as u64 + 1,
                        round: r,
                        substep: (t - start) as u64,
                        case: FoldCase::B,
                        y_allocated: y_alloc,
                        bound,
                    });
                }
                replay.apply(ev);
                t += 1;
            }
            let len = (t - p_start) as u64;
            phases.push(StepRange { start: p_start as u64 + 1, len });
            if len < phase_len {
                break Termination::Truncated;
            }
            if !saw_light {
                break Termination::Condition1;
            }
            if phases.len() as u64 >= k_j {
                break Termination::Condition2;
            }
            if t == events.len() {
                break Termination::Truncated;
            }
        };
        rounds.push(Round {
            start: start as u64 + 1,
            len: (t - start) as u64,
            case: FoldCase::B,
            phases,
            termination,
        });
    }
    Ok(FoldedSegmentation {
        j,
        phase_len,
        k_j,
        light_threshold: light,
        allocation_bound: bound,
        total_steps: total,
        rounds,
        violations,
    })
}

/// Layered potentials at a round start, i.e. after step `step - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundPotentials {
    pub round: usize,
    pub step: u64,
    pub phi: f64,
    pub psi: f64,
    pub dot_phi: f64,
    pub dot_psi: f64,
}

/// Evaluates Φ_j, Ψ_j and their partial versions at the start of every round.
pub fn round_start_potentials(
    trace: &Trace,
    seg: &FoldedSegmentation,
    j: u32,
    cfg: &PotentialConfig,
) -> Result<Vec<RoundPotentials>> {
    let events = step_events(trace)?;
    let mut replay = Replay::new(trace.n);
    let mut done = 0usize;
    let mut out = Vec::with_capacity(seg.rounds.len());
    for (r, round) in seg.rounds.iter().enumerate() {
        let before = (round.start - 1) as usize;
        if before > events.len() {
            return Err(BallocError::Report(format!("round {r} starts past the end of the trace")));
        }
        while done < before {
            replay.apply(events[done]);
            done += 1;
        }
        let y = replay.normalized();
        out.push(RoundPotentials {
            round: r,
            step: round.start,
            phi: phi_j(&y, j, cfg),
            psi: psi_j(&y, j, cfg),
            dot_phi: dot_phi_j(&y, j, cfg),
            dot_psi: dot_psi_j(&y, j, cfg),
        });
    }
    Ok(out)
}
