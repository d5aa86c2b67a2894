//! Step-exact state machines for the allocation processes.
//!
//! Each `step_*` method draws its samples from the distribution and then
//! delegates to the matching `apply_*` method, which takes the samples
//! explicitly. The `apply_*` layer is what hand traces and exact enumeration
//! drive.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smallvec::{smallvec, SmallVec};

use crate::error::{BallocError, Result};
use crate::load::{normalized_value, ordering_by_load, Load, LoadVector, Ordering};
use crate::potential::gamma_from_loads;
use crate::sampling::{SamplingDistribution, WeightDistribution};
use crate::trace::{Cadence, StepEvent, Trace, TraceRecord};

/// Identifier of the generator used for every simulation stream.
pub const RNG_ALGORITHM: &str = "rand_chacha-0.9/ChaCha8Rng::seed_from_u64";

pub type Rng64 = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Process {
    /// `d = 1` is OneChoice, `d = 2` is TwoChoice.
    DChoice { d: usize },
    Memory,
    WeakMemory { d: usize },
    ResetMemory { d: usize },
    OnePlusBeta { beta: f64 },
}

impl Process {
    pub fn one_choice() -> Self {
        Process::DChoice { d: 1 }
    }

    pub fn two_choice() -> Self {
        Process::DChoice { d: 2 }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Process::DChoice { d } | Process::WeakMemory { d } | Process::ResetMemory { d } if d == 0 => {
                Err(BallocError::InvalidProcess(format!("{self}: d must be at least 1")))
            }
            Process::OnePlusBeta { beta } if !(0.0..=1.0).contains(&beta) => {
                Err(BallocError::InvalidProcess(format!("beta = {beta} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }

    /// Weighted balls are supported for OneChoice, TwoChoice and 2-WeakMemory.
    pub fn supports_weights(&self) -> bool {
        matches!(self, Process::DChoice { d: 1 | 2 } | Process::WeakMemory { d: 2 })
    }

    /// Builds a process from a kind name plus optional `d` / `beta`
    /// parameters (used by configs and sweep axes).
    pub fn from_parts(kind: &str, d: Option<usize>, beta: Option<f64>) -> Result<Self> {
        let need_d = |name: &str| {
            d.ok_or_else(|| BallocError::InvalidProcess(format!("{name} needs a d parameter")))
        };
        let p = match kind {
            "onechoice" => Process::one_choice(),
            "twochoice" => Process::two_choice(),
            "dchoice" => Process::DChoice { d: need_d(kind)? },
            "memory" => Process::Memory,
            "weak-memory" => Process::WeakMemory { d: need_d(kind)? },
            "reset-memory" => Process::ResetMemory { d: need_d(kind)? },
            "one-plus-beta" => Process::OnePlusBeta {
                beta: beta.ok_or_else(|| BallocError::InvalidProcess("one-plus-beta needs beta".into()))?,
            },
            _ => return Err(BallocError::InvalidProcess(format!("unknown process `{kind}`"))),
        };
        p.validate()?;
        Ok(p)
    }

    /// Name without parameters.
    pub fn kind(&self) -> &'static str {
        match self {
            Process::DChoice { d: 1 } => "onechoice",
            Process::DChoice { d: 2 } => "twochoice",
            Process::DChoice { .. } => "dchoice",
            Process::Memory => "memory",
            Process::WeakMemory { .. } => "weak-memory",
            Process::ResetMemory { .. } => "reset-memory",
            Process::OnePlusBeta { .. } => "one-plus-beta",
        }
    }
}

impl fmt::Display for Process {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Process::DChoice { d: 1 } => write!(f, "onechoice"),
            Process::DChoice { d: 2 } => write!(f, "twochoice"),
            Process::DChoice { d } => write!(f, "dchoice:{d}"),
            Process::Memory => write!(f, "memory"),
            Process::WeakMemory { d } => write!(f, "weak-memory:{d}"),
            Process::ResetMemory { d } => write!(f, "reset-memory:{d}"),
            Process::OnePlusBeta { beta } => write!(f, "one-plus-beta:{beta}"),
        }
    }
}

impl FromStr for Process {
    type Err = BallocError;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, param) = match s.split_once(':') {
            Some((k, p)) => (k, Some(p)),
            None => (s, None),
        };
        let bad = |e: String| BallocError::InvalidSpec { spec: s.to_string(), reason: e };
        match kind {
            "one-plus-beta" => {
                let beta = param.map(|p| p.parse::<f64>().map_err(|e| bad(e.to_string()))).transpose()?;
                Process::from_parts(kind, None, beta)
            }
            _ => {
                let d = param.map(|p| p.parse::<usize>().map_err(|e| bad(e.to_string()))).transpose()?;
                if d.is_some() && matches!(kind, "onechoice" | "twochoice" | "memory") {
                    return Err(bad(format!("{kind} takes no parameter")));
                }
                Process::from_parts(kind, d, None)
            }
        }
    }
}

impl TryFrom<String> for Process {
    type Error = BallocError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Process> for String {
    fn from(p: Process) -> String {
        p.to_string()
    }
}

pub type Samples = SmallVec<[usize; 4]>;

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub sampled: Samples,
    pub allocated: usize,
    pub cache_after: Option<usize>,
    pub weight: f64,
}

/// Loads, cache, and run bookkeeping of a single process instance.
///
/// The d-WeakMemory ordering is kept implicitly: `run_start` stores the load
/// each bin had at the start of the current run, for the bins that have
/// received a ball since. Comparing `(run-start load, bin id)` pairs is the
/// same as comparing ranks under [`ordering_by_load`] of the run-start loads.
#[derive(Debug, Clone)]
pub struct ProcessState<L: Load = u64> {
    lv: LoadVector<L>,
    cache: Option<usize>,
    run_start: SmallVec<[(usize, L); 8]>,
    step: u64,
    // load of the last allocated bin before its increment
    prev_load: L,
}

impl<L: Load> ProcessState<L> {
    pub fn new(n: usize) -> Result<Self> {
        Ok(Self { lv: LoadVector::zeros(n)?, cache: None, run_start: SmallVec::new(), step: 0, prev_load: L::default() })
    }

    /// State positioned at the start of a run (or any Memory step) with the
    /// given loads, cache, and step counter.
    pub fn from_parts(lv: LoadVector<L>, cache: Option<usize>, step: u64) -> Result<Self> {
        if let Some(b) = cache {
            if b >= lv.n() {
                return Err(BallocError::InvalidParameter(format!("cache bin {b} out of range")));
            }
        }
        Ok(Self { lv, cache, run_start: SmallVec::new(), step, prev_load: L::default() })
    }

    pub fn loads(&self) -> &LoadVector<L> {
        &self.lv
    }

    pub fn cache(&self) -> Option<usize> {
        self.cache
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn n(&self) -> usize {
        self.lv.n()
    }

    fn allocate(&mut self, bin: usize, w: L) {
        self.prev_load = self.lv.load(bin);
        self.lv.add(bin, w);
        self.step += 1;
    }

    fn run_start_load(&self, bin: usize) -> L {
        self.run_start
            .iter()
            .find(|(b, _)| *b == bin)
            .map(|&(_, x)| x)
            .unwrap_or_else(|| self.lv.load(bin))
    }

    fn note_run_start(&mut self, bin: usize) {
        if !self.run_start.iter().any(|(b, _)| *b == bin) {
            self.run_start.push((bin, self.lv.load(bin)));
        }
    }

    /// `σ(i) > σ(b)` under the ordering frozen at the start of the run.
    fn ranked_lighter(&self, i: usize, b: usize) -> bool {
        let (xi, xb) = (self.run_start_load(i), self.run_start_load(b));
        xi < xb || (xi == xb && i > b)
    }

    /// Ordering by load at the start of the current run.
    pub fn frozen_ordering(&self) -> Ordering {
        let loads: Vec<L> = (0..self.n()).map(|i| self.run_start_load(i)).collect();
        ordering_by_load(&LoadVector::from_loads(loads).expect("loads are valid"))
    }

    /// Allocates to a least-loaded entry of `samples`; `tie_pick` selects
    /// among tied entries (taken modulo their count).
    pub fn apply_dchoice(&mut self, samples: &[usize], tie_pick: usize, w: L) -> usize {
        let min = samples.iter().map(|&i| self.lv.load(i)).fold(None, |m: Option<L>, x| match m {
            Some(m) if m <= x => Some(m),
            _ => Some(x),
        });
        let min = min.expect("at least one sample");
        let tied: Samples = samples.iter().copied().filter(|&i| self.lv.load(i) == min).collect();
        let chosen = tied[tie_pick % tied.len()];
        self.allocate(chosen, w);
        chosen
    }

    pub fn apply_memory(&mut self, i: usize, w: L) -> usize {
        let chosen = match self.cache {
            None => {
                self.cache = Some(i);
                i
            }
            Some(b) => {
                let (xi, xb) = (self.lv.load(i), self.lv.load(b));
                if xi < xb {
                    self.cache = Some(i);
                    i
                } else if xi == xb {
                    i
                } else {
                    b
                }
            }
        };
        debug_assert!(
            self.lv.load(chosen) <= self.lv.load(i)
                && self.cache.is_none_or(|b| self.lv.load(chosen) <= self.lv.load(b))
        );
        self.allocate(chosen, w);
        chosen
    }

    pub fn apply_weak_memory(&mut self, d: usize, i: usize, w: L) -> usize {
        let chosen = if self.step % d as u64 == 0 {
            self.run_start.clear();
            self.cache = Some(i);
            i
        } else {
            let b = self.cache.expect("cache is set at every run start");
            if self.ranked_lighter(i, b) {
                self.cache = Some(i);
                i
            } else {
                b
            }
        };
        self.note_run_start(chosen);
        self.allocate(chosen, w);
        chosen
    }

    pub fn apply_reset_memory(&mut self, d: usize, i: usize, w: L) -> usize {
        if self.step % d as u64 == 0 {
            self.cache = Some(i);
            self.allocate(i, w);
            return i;
        }
        let b = self.cache.expect("cache is set at every run start");
        let (xi, xb) = (self.lv.load(i), self.lv.load(b));
        let chosen = if xi < xb {
            self.cache = Some(i);
            i
        } else if xi == xb {
            i
        } else {
            b
        };
        self.allocate(chosen, w);
        chosen
    }

    /// d-Choice. A tie among sampled minima consumes one extra draw.
    pub fn step_dchoice<R: Rng + ?Sized>(
        &mut self,
        d: usize,
        dist: &SamplingDistribution,
        rng: &mut R,
        w: L,
    ) -> StepOutcome {
        let samples: Samples = (0..d).map(|_| dist.sample(rng)).collect();
        let min = samples.iter().map(|&i| self.lv.load(i)).fold(None, |m: Option<L>, x| match m {
            Some(m) if m <= x => Some(m),
            _ => Some(x),
        });
        let min = min.expect("d >= 1");
        let ties = samples.iter().filter(|&&i| self.lv.load(i) == min).count();
        let pick = if ties > 1 { rng.random_range(0..ties) } else { 0 };
        let allocated = self.apply_dchoice(&samples, pick, w);
        StepOutcome { sampled: samples, allocated, cache_after: None, weight: w.to_f64() }
    }

    pub fn step_memory<R: Rng + ?Sized>(
        &mut self,
        dist: &SamplingDistribution,
        rng: &mut R,
        w: L,
    ) -> StepOutcome {
        let i = dist.sample(rng);
        let allocated = self.apply_memory(i, w);
        StepOutcome { sampled: smallvec![i], allocated, cache_after: self.cache, weight: w.to_f64() }
    }

    pub fn step_weak_memory<R: Rng + ?Sized>(
        &mut self,
        d: usize,
        dist: &SamplingDistribution,
        rng: &mut R,
        w: L,
    ) -> StepOutcome {
        let i = dist.sample(rng);
        let allocated = self.apply_weak_memory(d, i, w);
        StepOutcome { sampled: smallvec![i], allocated, cache_after: self.cache, weight: w.to_f64() }
    }

    pub fn step_reset_memory<R: Rng + ?Sized>(
        &mut self,
        d: usize,
        dist: &SamplingDistribution,
        rng: &mut R,
        w: L,
    ) -> StepOutcome {
        let i = dist.sample(rng);
        let allocated = self.apply_reset_memory(d, i, w);
        StepOutcome { sampled: smallvec![i], allocated, cache_after: self.cache, weight: w.to_f64() }
    }

    /// TwoChoice with probability `beta`, else OneChoice. `beta` of exactly
    /// 0 or 1 draws no coin, so the stream matches the pure process.
    pub fn step_one_plus_beta<R: Rng + ?Sized>(
        &mut self,
        beta: f64,
        dist: &SamplingDistribution,
        rng: &mut R,
        w: L,
    ) -> StepOutcome {
        let two = if beta <= 0.0 {
            false
        } else if beta >= 1.0 {
            true
        } else {
            rng.random::<f64>() < beta
        };
        self.step_dchoice(if two { 2 } else { 1 }, dist, rng, w)
    }

    pub fn step<R: Rng + ?Sized>(
        &mut self,
        process: Process,
        dist: &SamplingDistribution,
        rng: &mut R,
        w: L,
    ) -> StepOutcome {
        match process {
            Process::DChoice { d } => self.step_dchoice(d, dist, rng, w),
            Process::Memory => self.step_memory(dist, rng, w),
            Process::WeakMemory { d } => self.step_weak_memory(d, dist, rng, w),
            Process::ResetMemory { d } => self.step_reset_memory(d, dist, rng, w),
            Process::OnePlusBeta { beta } => self.step_one_plus_beta(beta, dist, rng, w),
        }
    }
}

/// Everything needed to simulate one trial.
#[derive(Debug, Clone)]
pub struct ProcessConfig {
    pub process: Process,
    pub dist: SamplingDistribution,
    pub m: u64,
    pub seed: u64,
    pub trial: usize,
    pub cadence: Cadence,
    /// `None` runs unit balls with integer loads.
    pub weights: Option<WeightDistribution>,
    pub full_trace: bool,
    /// Record Γ(α) at every snapshot when set.
    pub gamma_alpha: Option<f64>,
    pub record_loads: bool,
}

impl ProcessConfig {
    pub fn new(process: Process, dist: SamplingDistribution, m: u64, seed: u64) -> Self {
        Self {
            process,
            dist,
            m,
            seed,
            trial: 0,
            cadence: Cadence::Grid,
            weights: None,
            full_trace: false,
            gamma_alpha: None,
            record_loads: false,
        }
    }
}

/// Max and min load maintained under increments.
struct Extremes<L: Load> {
    max: L,
    min: L,
    min_count: usize,
}

impl<L: Load> Extremes<L> {
    fn new(lv: &LoadVector<L>) -> Self {
        let min = lv.min_load();
        let min_count = lv.loads().iter().filter(|&&x| x == min).count();
        Self { max: lv.max_load(), min, min_count }
    }

    fn on_increment(&mut self, old: L, lv: &LoadVector<L>, bin: usize) {
        let new = lv.load(bin);
        if new > self.max {
            self.max = new;
        }
        if old == self.min && new != old {
            self.min_count -= 1;
            if self.min_count == 0 {
                *self = Self { max: self.max, ..Self::new(lv) };
            }
        }
    }
}

fn snapshot<L: Load>(
    cfg: &ProcessConfig,
    lv: &LoadVector<L>,
    ext: &Extremes<L>,
    step: u64,
    event: Option<StepEvent>,
) -> TraceRecord {
    let total = lv.total().to_f64();
    let n = lv.n();
    let max_norm = normalized_value(ext.max.to_f64(), total, n);
    TraceRecord {
        trial: cfg.trial,
        step,
        gap: max_norm,
        max_norm,
        min_norm: normalized_value(ext.min.to_f64(), total, n),
        event,
        gamma: cfg.gamma_alpha.map(|a| gamma_from_loads(lv, a)),
        loads: cfg.record_loads.then(|| lv.to_f64_vec()),
    }
}

fn simulate<L: Load>(cfg: &ProcessConfig) -> Trace {
    let n = cfg.dist.n();
    let mut rng = rng_from_seed(cfg.seed);
    let mut st = ProcessState::<L>::new(n).expect("distribution has n >= 1");
    let mut ext = Extremes::new(&st.lv);
    let grid = cfg.cadence.steps(n, cfg.m);
    let mut next = 0usize;
    let mut records = Vec::with_capacity(if cfg.full_trace { cfg.m as usize } else { grid.len() });
    if cfg.m == 0 {
        records.push(snapshot(cfg, &st.lv, &ext, 0, None));
    }
    for t in 1..=cfg.m {
        let w = match &cfg.weights {
            Some(wd) => L::from_weight(wd.sample(&mut rng)),
            None => L::UNIT,
        };
        let out = st.step(cfg.process, &cfg.dist, &mut rng, w);
        ext.on_increment(st.prev_load, &st.lv, out.allocated);
        let on_grid = next < grid.len() && grid[next] == t;
        if on_grid {
            next += 1;
        }
        if cfg.full_trace || on_grid {
            let event = cfg.full_trace.then(|| StepEvent {
                sampled: out.sampled.to_vec(),
                allocated: out.allocated,
                cache: out.cache_after,
                weight: out.weight,
            });
            records.push(snapshot(cfg, &st.lv, &ext, t, event));
        }
    }
    Trace {
        trial: cfg.trial,
        n,
        records,
        final_loads: st.lv.to_f64_vec(),
        total_weight: st.lv.total().to_f64(),
    }
}

/// Runs one trial. Unit balls use integer loads; weighted balls use real loads
/// and are restricted to processes with [`Process::supports_weights`].
pub fn run_process(cfg: &ProcessConfig) -> Result<Trace> {
    cfg.process.validate()?;
    if let Some(alpha) = cfg.gamma_alpha {
        if !(alpha > 0.0) {
            return Err(BallocError::InvalidParameter(format!("alpha = {alpha} must be positive")));
        }
    }
    match &cfg.weights {
        Some(w) if !w.is_unit() => {
            if !cfg.process.supports_weights() {
                return Err(BallocError::InvalidProcess(format!(
                    "weighted balls are only supported for onechoice, twochoice and weak-memory:2, not {}",
                    cfg.process
                )));
            }
            Ok(simulate::<f64>(cfg))
        }
        _ => {
            let cfg = ProcessConfig { weights: None, ..cfg.clone() };
            Ok(simulate::<u64>(&cfg))
        }
    }
}
