use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use balloc::analysis::{
    c1_check, c1_max_eps, exact_run_probs, mc_run_probs, proxy_allocation_vector, random_drift_states,
    round_start_potentials, segment_folded, twochoice_allocation_vector, verify_drop_exact, verify_drop_mc,
    weak_memory_run_probs_closed, AllocationVector, DriftState, RunProbMatrix,
};
use balloc::harness::experiment::{read_trace_file, run_experiment_with, RunOptions};
use balloc::harness::{report_from_files, sweep, ExperimentConfig, ReportKind, SweepConfig};
use balloc::load::{normalize, LoadVector};
use balloc::potential::{dot_phi_j, dot_psi_j, gamma, phi_j, psi_j, PotentialConfig};
use balloc::process::{rng_from_seed, Process};
use balloc::sampling::DistSpec;
use balloc::trace::Cadence;
use balloc::{BallocError, Result};

#[derive(Parser)]
#[command(name = "balloc", version, about = "Balanced-allocation simulator and analytics")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a multi-trial experiment.
    Run(RunArgs),
    /// Run a Cartesian grid of experiments.
    Sweep(SweepArgs),
    /// Turn a summary CSV into a plot-ready table.
    Report(ReportArgs),
    /// Run-allocation matrix and proxy vector of d-WeakMemory.
    AllocVector(AllocArgs),
    /// Check the hyperbolic-cosine drop inequality.
    VerifyDrop(DropArgs),
    /// Segment full Memory traces into folded-process rounds.
    Fold(FoldArgs),
    /// Evaluate potentials on every snapshot of a trace.
    Potentials(PotentialArgs),
    /// Check the prefix/suffix bias condition on an allocation vector.
    C1(C1Args),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config file; other flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    process: Option<Process>,
    #[arg(long)]
    dist: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<u64>,
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// grid, every:K or final
    #[arg(long)]
    cadence: Option<String>,
    #[arg(long)]
    full_trace: bool,
    #[arg(long)]
    record_loads: bool,
    #[arg(long)]
    gamma_alpha: Option<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Reuse a completed run directory with the same config.
    #[arg(long)]
    reuse: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Allow grids above the cell limit.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    summary: PathBuf,
    /// gap-vs-n, gap-vs-m or bias-dichotomy
    #[arg(long)]
    kind: ReportKind,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AllocArgs {
    #[arg(long)]
    dist: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// closed, exact or mc[:trials]
    #[arg(long, default_value = "closed")]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DropArgs {
    /// memory, weak-memory or reset-memory (d is taken from --d when missing)
    #[arg(long)]
    process: String,
    #[arg(long)]
    dist: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    d: usize,
    /// JSON file with [{"loads": [...], "cache": i}, ...] or random:k,gapmin
    #[arg(long)]
    states: String,
    /// exact or mc[:trials]
    #[arg(long, default_value = "exact")]
    mode: String,
    /// Gap above which a strict decrease is required.
    #[arg(long)]
    gap_threshold: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exit with status 3 unless every state above the threshold decreases.
    #[arg(long)]
    assert: bool,
}

#[derive(Args)]
struct FoldArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    j: u32,
    #[arg(long)]
    v: f64,
    #[arg(long)]
    alpha2: f64,
    #[arg(long)]
    c: Option<f64>,
    /// Include every round in the output.
    #[arg(long)]
    rounds: bool,
    /// Exit with status 3 on any violation or invalid partition.
    #[arg(long)]
    assert: bool,
}

#[derive(Args)]
struct PotentialArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    alpha: f64,
    /// v=..,alpha2=..[,c=..] for the layered potentials
    #[arg(long)]
    layered: Option<String>,
    /// Layers to evaluate with --layered.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    j: Vec<u32>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct C1Args {
    /// JSON file, twochoice:n, or proxy:n=..;d=..;dist=<spec>
    #[arg(long)]
    vector: String,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    assert: bool,
}

enum Failure {
    Error(BallocError),
    Assertion(String),
}

impl From<BallocError> for Failure {
    fn from(e: BallocError) -> Self {
        Failure::Error(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Error(e.into())
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Sweep(a) => cmd_sweep(a),
        Cmd::Report(a) => cmd_report(a),
        Cmd::AllocVector(a) => cmd_alloc(a),
        Cmd::VerifyDrop(a) => cmd_drop(a),
        Cmd::Fold(a) => cmd_fold(a),
        Cmd::Potentials(a) => cmd_potentials(a),
        Cmd::C1(a) => cmd_c1(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn cmd_run(a: RunArgs) -> CmdResult {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => {
            let missing = |f: &str| BallocError::InvalidParameter(format!("--{f} is required without --config"));
            ExperimentConfig::new(
                a.process.ok_or_else(|| missing("process"))?,
                "uniform",
                a.n.ok_or_else(|| missing("n"))?,
                a.m.ok_or_else(|| missing("m"))?,
            )
        }
    };
    if let Some(p) = a.process {
        cfg.process = p;
    }
    if let Some(d) = a.dist {
        cfg.dist = d;
    }
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(m) = a.m {
        cfg.m = m;
    }
    if a.weights.is_some() {
        cfg.weights = a.weights;
    }
    if let Some(t) = a.trials {
        cfg.trials = t;
    }
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    if let Some(c) = a.cadence {
        cfg.cadence = Cadence::try_from(c)?;
    }
    cfg.full_trace |= a.full_trace;
    cfg.record_loads |= a.record_loads;
    if a.gamma_alpha.is_some() {
        cfg.gamma_alpha = a.gamma_alpha;
    }
    if let Some(o) = a.output {
        cfg.output = o;
    }
    let r = run_experiment_with(&cfg, &RunOptions { threads: a.threads, reuse: a.reuse })?;
    let gaps: Vec<f64> = r.summary.iter().map(|s| s.final_gap).collect();
    print_json(&serde_json::json!({
        "run_dir": r.dir,
        "reused": r.reused,
        "trials": r.summary.len(),
        "median_final_gap": balloc::harness::report::median(&gaps),
    }))?;
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> CmdResult {
    let sc: SweepConfig = serde_json::from_str(&fs::read_to_string(&a.config)?).map_err(BallocError::from)?;
    let r = sweep(&sc, a.force, a.threads)?;
    print_json(&serde_json::json!({
        "cells": r.cells.len(),
        "reused": r.reused,
        "rows": r.summary.len(),
        "summary": r.summary_path,
    }))?;
    Ok(())
}

fn cmd_report(a: ReportArgs) -> CmdResult {
    let t = report_from_files(&a.summary, a.kind)?;
    t.write_csv(output(a.out.as_deref())?)?;
    Ok(())
}

fn mc_trials(mode: &str, default: u64) -> Result<Option<u64>> {
    match mode.split_once(':') {
        None if mode == "mc" => Ok(Some(default)),
        Some(("mc", t)) => t
            .parse()
            .map(Some)
            .map_err(|e| BallocError::InvalidSpec { spec: mode.into(), reason: format!("{e}") }),
        _ => Ok(None),
    }
}

fn cmd_alloc(a: AllocArgs) -> CmdResult {
    let dist = DistSpec::parse(&a.dist)?.build(a.n)?;
    let rp: RunProbMatrix = match a.mode.as_str() {
        "closed" => weak_memory_run_probs_closed(dist.probs(), a.d)?,
        "exact" => exact_run_probs(dist.probs(), a.d)?,
        m => match mc_trials(m, 1_000_000)? {
            Some(t) => mc_run_probs(dist.probs(), a.d, t, &mut rng_from_seed(a.seed))?,
            None => {
                return Err(BallocError::InvalidSpec { spec: m.into(), reason: "expected closed, exact or mc[:trials]".into() }
                    .into())
            }
        },
    };
    let proxy = proxy_allocation_vector(&rp);
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    let mut header = vec!["rank".to_string()];
    header.extend((0..=a.d).map(|j| format!("p_{j}")));
    header.push("proxy".into());
    w.write_record(&header).map_err(BallocError::from)?;
    for (i, row) in rp.p.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(row.iter().map(|x| x.to_string()));
        rec.push(proxy.as_slice()[i].to_string());
        w.write_record(&rec).map_err(BallocError::from)?;
    }
    w.flush()?;
    Ok(())
}

fn drift_process(s: &str, d: usize) -> Result<Process> {
    if s.contains(':') {
        return s.parse();
    }
    match s {
        "weak-memory" | "reset-memory" => Process::from_parts(s, Some(d), None),
        _ => s.parse(),
    }
}

fn cmd_drop(a: DropArgs) -> CmdResult {
    let process = drift_process(&a.process, a.d)?;
    let dist = DistSpec::parse(&a.dist)?.build(a.n)?;
    let mut rng = rng_from_seed(a.seed);
    let (states, default_threshold) = match a.states.strip_prefix("random:") {
        Some(spec) => {
            let bad = || BallocError::InvalidSpec { spec: a.states.clone(), reason: "expected random:k,gapmin".into() };
            let (k, g) = spec.split_once(',').ok_or_else(bad)?;
            let k: usize = k.trim().parse().map_err(|_| bad())?;
            let g: f64 = g.trim().parse().map_err(|_| bad())?;
            (random_drift_states(a.n, k, g, &mut rng)?, g)
        }
        None => {
            let s: Vec<DriftState> =
                serde_json::from_str(&fs::read_to_string(&a.states)?).map_err(BallocError::from)?;
            (s, 0.0)
        }
    };
    let threshold = a.gap_threshold.unwrap_or(default_threshold);
    let report = if a.mode == "exact" {
        verify_drop_exact(process, &dist, a.alpha, a.d, &states, threshold)?
    } else {
        match mc_trials(&a.mode, 100_000)? {
            Some(t) => verify_drop_mc(process, &dist, a.alpha, a.d, &states, threshold, t, &mut rng)?,
            None => {
                return Err(BallocError::InvalidSpec { spec: a.mode.clone(), reason: "expected exact or mc[:trials]".into() }
                    .into())
            }
        }
    };
    print_json(&report)?;
    if a.assert && !report.all_decrease_above_threshold {
        return Err(Failure::Assertion("a state above the gap threshold did not decrease".into()));
    }
    Ok(())
}

fn cmd_fold(a: FoldArgs) -> CmdResult {
    let (header, traces) = read_trace_file(&a.trace)?;
    let cfg = PotentialConfig::exploratory(a.v, a.alpha2, a.c, header.config.n)?;
    let mut per_trial = Vec::new();
    let mut total_violations = 0;
    let mut all_valid = true;
    for t in &traces {
        let seg = segment_folded(t, a.j, &cfg)?;
        let partition = seg.check_partition();
        all_valid &= partition.is_ok();
        total_violations += seg.violation_count();
        let mut entry = serde_json::json!({
            "trial": t.trial,
            "rounds": seg.rounds.len(),
            "case_a_rounds": seg.rounds.iter().filter(|r| r.case == balloc::analysis::FoldCase::A).count(),
            "violations": seg.violations,
            "partition_valid": partition.is_ok(),
            "phase_len": seg.phase_len,
            "k_j": seg.k_j,
        });
        if a.rounds {
            entry["segmentation"] = serde_json::to_value(&seg).map_err(BallocError::from)?;
            entry["round_potentials"] =
                serde_json::to_value(round_start_potentials(t, &seg, a.j, &cfg)?).map_err(BallocError::from)?;
        }
        per_trial.push(entry);
    }
    print_json(&serde_json::json!({
        "violation_count": total_violations,
        "partition_valid": all_valid,
        "trials": per_trial,
    }))?;
    if a.assert && (total_violations > 0 || !all_valid) {
        return Err(Failure::Assertion(format!("{total_violations} violations, partition valid: {all_valid}")));
    }
    Ok(())
}

fn parse_layered(spec: &str, n: usize) -> Result<PotentialConfig> {
    let (mut v, mut alpha2, mut c) = (None, None, None);
    let bad = |r: &str| BallocError::InvalidSpec { spec: spec.into(), reason: r.into() };
    for part in spec.split(',') {
        let (k, val) = part.split_once('=').ok_or_else(|| bad("expected key=value"))?;
        let x: f64 = val.trim().parse().map_err(|_| bad("value is not a number"))?;
        match k.trim() {
            "v" => v = Some(x),
            "alpha2" => alpha2 = Some(x),
            "c" => c = Some(x),
            _ => return Err(bad("keys are v, alpha2, c")),
        }
    }
    PotentialConfig::exploratory(v.ok_or_else(|| bad("missing v"))?, alpha2.ok_or_else(|| bad("missing alpha2"))?, c, n)
}

fn cmd_potentials(a: PotentialArgs) -> CmdResult {
    let (header, traces) = read_trace_file(&a.trace)?;
    let layered = a.layered.as_deref().map(|s| parse_layered(s, header.config.n)).transpose()?;
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    let mut cols = vec!["trial".to_string(), "step".into(), "gap".into(), "gamma".into()];
    if layered.is_some() {
        for j in &a.j {
            cols.extend([format!("phi_{j}"), format!("psi_{j}"), format!("dot_phi_{j}"), format!("dot_psi_{j}")]);
        }
    }
    w.write_record(&cols).map_err(BallocError::from)?;
    for t in &traces {
        for r in &t.records {
            let loads = r.loads.clone().ok_or_else(|| {
                BallocError::MissingStepData("snapshots need recorded loads (run with --record-loads)".into())
            })?;
            let y = normalize(&LoadVector::from_loads(loads)?);
            let mut rec = vec![t.trial.to_string(), r.step.to_string(), r.gap.to_string(), gamma(&y, a.alpha).to_string()];
            if let Some(cfg) = &layered {
                for &j in &a.j {
                    rec.extend([phi_j(&y, j, cfg), psi_j(&y, j, cfg), dot_phi_j(&y, j, cfg), dot_psi_j(&y, j, cfg)].map(|x| x.to_string()));
                }
            }
            w.write_record(&rec).map_err(BallocError::from)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_vector(spec: &str) -> Result<AllocationVector> {
    if let Some(n) = spec.strip_prefix("twochoice:") {
        let n = n.parse().map_err(|_| BallocError::InvalidSpec { spec: spec.into(), reason: "bad n".into() })?;
        return twochoice_allocation_vector(n);
    }
    if let Some(rest) = spec.strip_prefix("proxy:") {
        let bad = |r: &str| BallocError::InvalidSpec { spec: spec.into(), reason: r.into() };
        let (mut n, mut d, mut dist) = (None, None, None);
        for part in rest.split(';') {
            let (k, v) = part.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            match k.trim() {
                "n" => n = Some(v.parse::<usize>().map_err(|_| bad("bad n"))?),
                "d" => d = Some(v.parse::<usize>().map_err(|_| bad("bad d"))?),
                "dist" => dist = Some(v.to_string()),
                _ => return Err(bad("keys are n, d, dist")),
            }
        }
        let n = n.ok_or_else(|| bad("missing n"))?;
        let dist = DistSpec::parse(dist.as_deref().unwrap_or("uniform"))?.build(n)?;
        let rp = exact_run_probs(dist.probs(), d.ok_or_else(|| bad("missing d"))?)?;
        return Ok(proxy_allocation_vector(&rp));
    }
    let v: Vec<f64> = serde_json::from_str(&fs::read_to_string(spec)?)?;
    AllocationVector::new(v)
}

fn cmd_c1(a: C1Args) -> CmdResult {
    let v = parse_vector(&a.vector)?;
    let r = c1_check(&v, a.delta, a.eps)?;
    let max_eps = c1_max_eps(&v, a.delta)?;
    print_json(&serde_json::json!({ "report": r, "max_eps": max_eps }))?;
    if a.assert && !r.pass {
        return Err(Failure::Assertion(format!("violation at k = {:?}", r.first_violation)));
    }
    Ok(())
}
