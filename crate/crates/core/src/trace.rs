//! Trace records emitted by simulations and the snapshot cadence.

use serde::{Deserialize, Serialize};

use crate::error::{BallocError, Result};

/// Per-step payload of a full trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub sampled: Vec<usize>,
    pub allocated: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<usize>,
    pub weight: f64,
}

/// One line of a trace file. `step` counts allocated balls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub trial: usize,
    pub step: u64,
    pub gap: f64,
    pub max_norm: f64,
    pub min_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<StepEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loads: Option<Vec<f64>>,
}

/// Records of one trial plus the final state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub trial: usize,
    pub n: usize,
    pub records: Vec<TraceRecord>,
    pub final_loads: Vec<f64>,
    pub total_weight: f64,
}

impl Trace {
    pub fn final_gap(&self) -> f64 {
        self.records.last().map(|r| r.gap).unwrap_or(0.0)
    }

    /// Largest gap over the recorded snapshots.
    pub fn max_gap(&self) -> f64 {
        self.records.iter().map(|r| r.gap).fold(0.0, f64::max)
    }

    pub fn has_step_events(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.event.is_some())
    }
}

/// When to emit snapshot records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(try_from = "String", into = "String")]
pub enum Cadence {
    /// `ceil(n * 1.25^k)` for every integer `k`, plus every multiple of `n`.
    #[default]
    Grid,
    Every(u64),
    FinalOnly,
}

impl TryFrom<String> for Cadence {
    type Error = BallocError;

    fn try_from(s: String) -> Result<Self> {
        match s.as_str() {
            "grid" => Ok(Cadence::Grid),
            "final" => Ok(Cadence::FinalOnly),
            _ => {
                let k = s
                    .strip_prefix("every:")
                    .and_then(|k| k.parse::<u64>().ok())
                    .filter(|&k| k > 0)
                    .ok_or_else(|| BallocError::InvalidSpec {
                        spec: s.clone(),
                        reason: "expected grid, final or every:<k>".into(),
                    })?;
                Ok(Cadence::Every(k))
            }
        }
    }
}

impl From<Cadence> for String {
    fn from(c: Cadence) -> String {
        match c {
            Cadence::Grid => "grid".into(),
            Cadence::FinalOnly => "final".into(),
            Cadence::Every(k) => format!("every:{k}"),
        }
    }
}

/// Geometric ratio of the default snapshot grid.
pub const GRID_RATIO: f64 = 1.25;

impl Cadence {
    /// Sorted snapshot steps in `[1, m]`; always ends with `m` (or is `[0]`
    /// when `m == 0`).
    pub fn steps(&self, n: usize, m: u64) -> Vec<u64> {
        if m == 0 {
            return vec![0];
        }
        let mut steps = Vec::new();
        match *self {
            Cadence::Grid => {
                let nf = n as f64;
                // k <= 0 covers the lightly loaded regime down to step 1
                let mut k = 0i32;
                loop {
                    let t = (nf * GRID_RATIO.powi(k)).ceil() as u64;
                    if t <= m {
                        steps.push(t.max(1));
                    }
                    if t <= 1 {
                        break;
                    }
                    k -= 1;
                }
                let mut k = 1i32;
                loop {
                    let t = (nf * GRID_RATIO.powi(k)).ceil() as u64;
                    if t > m {
                        break;
                    }
                    steps.push(t);
                    k += 1;
                }
                let n = n as u64;
                steps.extend((1..=m / n).map(|q| q * n));
            }
            Cadence::Every(k) => steps.extend((1..=m / k).map(|q| q * k)),
            Cadence::FinalOnly => {}
        }
        steps.push(m);
        steps.sort_unstable();
        steps.dedup();
        steps
    }
}
