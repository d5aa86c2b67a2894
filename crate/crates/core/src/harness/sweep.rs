//! Cartesian sweeps over experiment parameters.

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{BallocError, Result};
use crate::harness::config::{ExperimentConfig, Metadata};
use crate::harness::experiment::{
    read_csv, run_experiment_with, write_csv, RunOptions, SnapshotRow, SummaryRow, SNAPSHOT_FILE,
};
use crate::process::Process;
use crate::trace::Cadence;

pub const MAX_CELLS: usize = 10_000;
pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.csv";
pub const SWEEP_SNAPSHOT_FILE: &str = "sweep_snapshots.csv";

fn default_dist() -> String {
    "uniform".into()
}

fn default_trials() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Process names. A bare kind that takes `d` or `beta` expands over that axis.
    pub process: Vec<String>,
    pub n: Vec<usize>,
    /// `m = round(mult * n)` for each entry.
    pub m_mult: Vec<f64>,
    /// Step-distribution axes; when both are non-empty they replace `dist`.
    #[serde(default)]
    pub a: Vec<f64>,
    #[serde(default)]
    pub b: Vec<f64>,
    #[serde(default)]
    pub d: Vec<usize>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default = "default_dist")]
    pub dist: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub cadence: Cadence,
    #[serde(default)]
    pub full_trace: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_alpha: Option<f64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub cells: Vec<ExperimentConfig>,
    pub reused: usize,
    pub summary: Vec<SummaryRow>,
    pub summary_path: PathBuf,
}

fn processes(sc: &SweepConfig) -> Result<Vec<Process>> {
    let mut out = Vec::new();
    for p in &sc.process {
        let expand_d = matches!(p.as_str(), "dchoice" | "weak-memory" | "reset-memory");
        if expand_d {
            if sc.d.is_empty() {
                return Err(BallocError::InvalidParameter(format!("process `{p}` needs the d axis")));
            }
            for &d in &sc.d {
                out.push(Process::from_parts(p, Some(d), None)?);
            }
        } else if p == "one-plus-beta" {
            if sc.beta.is_empty() {
                return Err(BallocError::InvalidParameter("one-plus-beta needs the beta axis".into()));
            }
            for &b in &sc.beta {
                out.push(Process::from_parts(p, None, Some(b))?);
            }
        } else {
            out.push(p.parse()?);
        }
    }
    Ok(out)
}

fn dists(sc: &SweepConfig) -> Vec<String> {
    if sc.a.is_empty() || sc.b.is_empty() {
        return vec![sc.dist.clone()];
    }
    sc.a.iter().flat_map(|a| sc.b.iter().map(move |b| format!("step:a={a},b={b}"))).collect()
}

/// Expands the grid into one experiment config per cell.
pub fn expand(sc: &SweepConfig) -> Result<Vec<ExperimentConfig>> {
    let procs = processes(sc)?;
    let ds = dists(sc);
    let count = procs.len() * ds.len() * sc.n.len() * sc.m_mult.len();
    if count == 0 {
        return Err(BallocError::InvalidParameter("sweep grid is empty".into()));
    }
    let mut cells = Vec::with_capacity(count.min(MAX_CELLS + 1));
    for &process in &procs {
        for dist in &ds {
            for &n in &sc.n {
                for &mult in &sc.m_mult {
                    if !(mult >= 0.0) {
                        return Err(BallocError::InvalidParameter(format!("m multiplier {mult} is negative")));
                    }
                    cells.push(ExperimentConfig {
                        process,
                        dist: dist.clone(),
                        n,
                        m: (mult * n as f64).round() as u64,
                        weights: sc.weights.clone(),
                        trials: sc.trials,
                        master_seed: sc.master_seed,
                        cadence: sc.cadence,
                        full_trace: sc.full_trace,
                        gamma_alpha: sc.gamma_alpha,
                        record_loads: false,
                        output: sc.output.clone(),
                        metadata: Metadata::default(),
                    });
                }
            }
        }
    }
    Ok(cells)
}

pub fn cell_count(sc: &SweepConfig) -> Result<usize> {
    let procs = processes(sc)?;
    Ok(procs.len() * dists(sc).len() * sc.n.len() * sc.m_mult.len())
}

/// Runs every cell (reusing completed ones) and writes merged summary and
/// snapshot CSVs into the output directory.
pub fn sweep(sc: &SweepConfig, force: bool, threads: Option<usize>) -> Result<SweepResult> {
    let count = cell_count(sc)?;
    if count > MAX_CELLS && !force {
        return Err(BallocError::GridTooLarge { cells: count, limit: MAX_CELLS });
    }
    let cells = expand(sc)?;
    for c in &cells {
        c.validate()?;
    }
    let opts = RunOptions { threads, reuse: true };
    let mut summary = Vec::new();
    let mut snapshots: Vec<SnapshotRow> = Vec::new();
    let mut reused = 0;
    for c in &cells {
        let r = run_experiment_with(c, &opts)?;
        reused += r.reused as usize;
        snapshots.extend(read_csv::<SnapshotRow>(&r.dir.join(SNAPSHOT_FILE))?);
        summary.extend(r.summary);
    }
    fs::create_dir_all(&sc.output)?;
    let summary_path = sc.output.join(SWEEP_SUMMARY_FILE);
    write_csv(&summary_path, &summary)?;
    write_csv(&sc.output.join(SWEEP_SNAPSHOT_FILE), &snapshots)?;
    Ok(SweepResult { cells, reused, summary, summary_path })
}
