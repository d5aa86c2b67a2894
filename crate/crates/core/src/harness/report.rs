//! Plot-ready tables derived from summary and snapshot CSVs.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{BallocError, Result};
use crate::harness::experiment::{read_csv, SnapshotRow, SummaryRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    GapVsN,
    GapVsM,
    BiasDichotomy,
}

impl FromStr for ReportKind {
    type Err = BallocError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gap-vs-n" => Ok(Self::GapVsN),
            "gap-vs-m" => Ok(Self::GapVsM),
            "bias-dichotomy" => Ok(Self::BiasDichotomy),
            _ => Err(BallocError::InvalidSpec {
                spec: s.into(),
                reason: "expected gap-vs-n, gap-vs-m or bias-dichotomy".into(),
            }),
        }
    }
}

impl fmt::Display for ReportKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::GapVsN => "gap-vs-n",
            Self::GapVsM => "gap-vs-m",
            Self::BiasDichotomy => "bias-dichotomy",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(headers: &[&str]) -> Self {
        Self { headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.headers)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

type CellKey = (String, String, usize, u64);

fn group_final(rows: &[SummaryRow]) -> BTreeMap<CellKey, Vec<f64>> {
    let mut g: BTreeMap<CellKey, Vec<f64>> = BTreeMap::new();
    for r in rows {
        g.entry((r.process.clone(), r.dist.clone(), r.n, r.m)).or_default().push(r.final_gap);
    }
    g
}

/// Median and quantiles of the final gap per cell with `ln ln n`, `ln n` and
/// `ln n / ln ln n` reference columns.
pub fn gap_vs_n(rows: &[SummaryRow]) -> Result<Table> {
    if rows.is_empty() {
        return Err(BallocError::Report("summary is empty".into()));
    }
    let mut t = Table::new(&[
        "process", "dist", "n", "m", "trials", "median", "q10", "q25", "q75", "q90", "lnln_n", "ln_n",
        "ln_n_over_lnln_n",
    ]);
    for ((p, d, n, m), gaps) in group_final(rows) {
        let s = sorted(gaps);
        let ln = (n as f64).ln();
        let lnln = ln.ln();
        t.rows.push(vec![
            p,
            d,
            n.to_string(),
            m.to_string(),
            s.len().to_string(),
            quantile(&s, 0.5).to_string(),
            quantile(&s, 0.1).to_string(),
            quantile(&s, 0.25).to_string(),
            quantile(&s, 0.75).to_string(),
            quantile(&s, 0.9).to_string(),
            lnln.to_string(),
            ln.to_string(),
            (ln / lnln).to_string(),
        ]);
    }
    Ok(t)
}

/// Median gap over trials at each recorded step.
pub fn gap_vs_m(rows: &[SnapshotRow]) -> Result<Table> {
    if rows.is_empty() {
        return Err(BallocError::Report("snapshot table is empty".into()));
    }
    let mut g: BTreeMap<(String, String, usize, u64, u64), Vec<f64>> = BTreeMap::new();
    for r in rows {
        g.entry((r.process.clone(), r.dist.clone(), r.n, r.m, r.step)).or_default().push(r.gap);
    }
    let mut t = Table::new(&["process", "dist", "n", "m", "step", "step_over_n", "trials", "median", "q10", "q90"]);
    for ((p, d, n, m, step), gaps) in g {
        let s = sorted(gaps);
        t.rows.push(vec![
            p,
            d,
            n.to_string(),
            m.to_string(),
            step.to_string(),
            (step as f64 / n as f64).to_string(),
            s.len().to_string(),
            quantile(&s, 0.5).to_string(),
            quantile(&s, 0.1).to_string(),
            quantile(&s, 0.9).to_string(),
        ]);
    }
    Ok(t)
}

/// Median final gap per (process, dist, n) against `m`, with the increase
/// over the smallest `m` of the same group.
pub fn bias_dichotomy(rows: &[SummaryRow]) -> Result<Table> {
    if rows.is_empty() {
        return Err(BallocError::Report("summary is empty".into()));
    }
    let mut t = Table::new(&["process", "dist", "n", "m", "m_over_n", "median", "increase"]);
    let mut base: BTreeMap<(String, String, usize), f64> = BTreeMap::new();
    for ((p, d, n, m), gaps) in group_final(rows) {
        let med = median(&gaps);
        let b = *base.entry((p.clone(), d.clone(), n)).or_insert(med);
        t.rows.push(vec![
            p,
            d,
            n.to_string(),
            m.to_string(),
            (m as f64 / n as f64).to_string(),
            med.to_string(),
            (med - b).to_string(),
        ]);
    }
    Ok(t)
}

/// Snapshot file that sits next to a summary file.
pub fn sibling_snapshots(summary: &Path) -> PathBuf {
    let name = summary.file_name().and_then(|s| s.to_str()).unwrap_or("summary.csv");
    summary.with_file_name(name.replace("summary", "snapshots"))
}

pub fn report_from_files(summary: &Path, kind: ReportKind) -> Result<Table> {
    match kind {
        ReportKind::GapVsN => gap_vs_n(&read_csv(summary)?),
        ReportKind::BiasDichotomy => bias_dichotomy(&read_csv(summary)?),
        ReportKind::GapVsM => gap_vs_m(&read_csv(&sibling_snapshots(summary))?),
    }
}
