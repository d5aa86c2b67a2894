//! Multi-trial execution and result files.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{BallocError, Result};
use crate::harness::config::ExperimentConfig;
use crate::process::run_process;
use crate::trace::{Trace, TraceRecord};

pub const THREADS_ENV: &str = "BALLOC_THREADS";
pub const TRACE_FILE: &str = "trace.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const SNAPSHOT_FILE: &str = "snapshots.csv";
pub const CONFIG_FILE: &str = "config.json";

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub process: String,
    pub dist: String,
    pub n: usize,
    pub m: u64,
    pub trial: usize,
    pub seed: u64,
    pub final_gap: f64,
    pub max_gap: f64,
}

/// One row of `snapshots.csv` (gap at each recorded step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub process: String,
    pub dist: String,
    pub n: usize,
    pub m: u64,
    pub trial: usize,
    pub step: u64,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceHeader {
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub created_unix: u64,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; falls back to `BALLOC_THREADS`, then to rayon's default.
    pub threads: Option<usize>,
    /// Reuse a completed run directory with an identical config.
    pub reuse: bool,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub dir: PathBuf,
    pub summary: Vec<SummaryRow>,
    pub reused: bool,
}

pub fn thread_count(explicit: Option<usize>) -> Result<Option<usize>> {
    if let Some(t) = explicit {
        return if t == 0 {
            Err(BallocError::InvalidParameter("thread count must be at least 1".into()))
        } else {
            Ok(Some(t))
        };
    }
    match std::env::var(THREADS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(t) if t > 0 => Ok(Some(t)),
            _ => Err(BallocError::InvalidParameter(format!("{THREADS_ENV}={s} is not a positive integer"))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs every trial in memory. Results come back in trial order whatever the
/// number of threads.
pub fn run_trials(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<Trace>> {
    cfg.validate()?;
    let dist = cfg.build_dist()?;
    let weights = cfg.build_weights()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = thread_count(threads)? {
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| BallocError::Report(format!("thread pool: {e}")))?;
    pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|k| run_process(&cfg.process_config(k, &dist, weights.as_ref())))
            .collect()
    })
}

pub fn summarize(cfg: &ExperimentConfig, traces: &[Trace]) -> Vec<SummaryRow> {
    traces
        .iter()
        .map(|t| SummaryRow {
            process: cfg.process.to_string(),
            dist: cfg.dist.clone(),
            n: cfg.n,
            m: cfg.m,
            trial: t.trial,
            seed: cfg.trial_seed(t.trial),
            final_gap: t.final_gap(),
            max_gap: t.max_gap(),
        })
        .collect()
}

fn snapshot_rows<'a>(cfg: &'a ExperimentConfig, traces: &'a [Trace]) -> impl Iterator<Item = SnapshotRow> + 'a {
    traces.iter().flat_map(move |t| {
        t.records.iter().map(move |r| SnapshotRow {
            process: cfg.process.to_string(),
            dist: cfg.dist.clone(),
            n: cfg.n,
            m: cfg.m,
            trial: t.trial,
            step: r.step,
            gap: r.gap,
        })
    })
}

/// Trace records as JSON lines, trials in index order.
pub fn write_trace_body<W: Write>(out: &mut W, traces: &[Trace]) -> Result<()> {
    for t in traces {
        for r in &t.records {
            serde_json::to_writer(&mut *out, r)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(BallocError::from)).collect()
}

fn completed_run(cfg: &ExperimentConfig, dir: &Path) -> Option<Vec<SummaryRow>> {
    let saved: ExperimentConfig = serde_json::from_str(&fs::read_to_string(dir.join(CONFIG_FILE)).ok()?).ok()?;
    if saved.hash() != cfg.hash() {
        return None;
    }
    let rows: Vec<SummaryRow> = read_csv(&dir.join(SUMMARY_FILE)).ok()?;
    (rows.len() == cfg.trials).then_some(rows)
}

/// Runs all trials and writes `config.json`, `trace.jsonl` (a header line
/// followed by records), `summary.csv` and `snapshots.csv` into the run
/// directory.
pub fn run_experiment_with(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunResult> {
    cfg.validate()?;
    let dir = cfg.run_dir();
    if opts.reuse {
        if let Some(summary) = completed_run(cfg, &dir) {
            return Ok(RunResult { dir, summary, reused: true });
        }
    }
    let traces = run_trials(cfg, opts.threads)?;
    fs::create_dir_all(&dir)?;
    // summary last, so its presence marks a completed run
    let _ = fs::remove_file(dir.join(SUMMARY_FILE));
    fs::write(dir.join(CONFIG_FILE), cfg.to_json()?)?;
    let header = TraceHeader {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
    };
    let mut out = BufWriter::new(File::create(dir.join(TRACE_FILE))?);
    serde_json::to_writer(&mut out, &serde_json::json!({ "header": header }))?;
    out.write_all(b"\n")?;
    write_trace_body(&mut out, &traces)?;
    out.flush()?;
    write_csv(&dir.join(SNAPSHOT_FILE), snapshot_rows(cfg, &traces))?;
    let summary = summarize(cfg, &traces);
    write_csv(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(RunResult { dir, summary, reused: false })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult> {
    run_experiment_with(cfg, &RunOptions::default())
}

/// Reads a `trace.jsonl` file: the header and the records grouped per trial.
pub fn read_trace_file(path: &Path) -> Result<(TraceHeader, Vec<Trace>)> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let first = lines.next().ok_or_else(|| BallocError::Report(format!("{} is empty", path.display())))??;
    #[derive(Deserialize)]
    struct Wrapped {
        header: TraceHeader,
    }
    let header = serde_json::from_str::<Wrapped>(&first)?.header;
    let n = header.config.n;
    let mut traces: Vec<Trace> = Vec::new();
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line)?;
        if traces.last().is_none_or(|t| t.trial != rec.trial) {
            traces.push(Trace { trial: rec.trial, n, records: Vec::new(), final_loads: Vec::new(), total_weight: 0.0 });
        }
        traces.last_mut().expect("just pushed").records.push(rec);
    }
    for t in &mut traces {
        if let Some(loads) = t.records.last().and_then(|r| r.loads.clone()) {
            t.total_weight = loads.iter().sum();
            t.final_loads = loads;
        }
    }
    Ok((header, traces))
}

/// All lines of a trace file after the header.
pub fn trace_body(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path)?;
    Ok(text.split_once('\n').map(|(_, body)| body.to_string()).unwrap_or_default())
}
