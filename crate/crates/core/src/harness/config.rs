//! Experiment configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BallocError, Result};
use crate::harness::seed::derive_trial_seed;
use crate::process::{Process, ProcessConfig, RNG_ALGORITHM};
use crate::sampling::{DistSpec, SamplingDistribution, WeightDistribution, WeightSpec};
use crate::trace::Cadence;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool_version: String,
    pub rng_algorithm: String,
}

impl Default for Metadata {
    fn default() -> Self {
        Self { tool_version: TOOL_VERSION.into(), rng_algorithm: RNG_ALGORITHM.into() }
    }
}

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
pub struct ExperimentConfig {
    /// Process with its parameters, e.g. `memory`, `weak-memory:2`, `one-plus-beta:0.5`.
    pub process: Process,
    /// Distribution spec: `uniform`, `step:a=..,b=..[,snap]`, `biased:@file` or `biased:[..]`.
    #[serde(default = "default_dist")]
    pub dist: String,
    pub n: usize,
    pub m: u64,
    /// Weight spec (`weights:unit|exp|discrete:@file`); unit balls when absent.
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
    #[serde(default)]
    pub record_loads: bool,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub metadata: Metadata,
}

impl ExperimentConfig {
    pub fn new(process: Process, dist: impl Into<String>, n: usize, m: u64) -> Self {
        Self {
            process,
            dist: dist.into(),
            n,
            m,
            weights: None,
            trials: 1,
            master_seed: 0,
            cadence: Cadence::default(),
            full_trace: false,
            gamma_alpha: None,
            record_loads: false,
            output: default_output(),
            metadata: Metadata::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.process.validate()?;
        if self.n == 0 {
            return Err(BallocError::InvalidParameter("n must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(BallocError::InvalidParameter("trials must be at least 1".into()));
        }
        self.build_dist()?;
        let w = self.build_weights()?;
        if w.as_ref().is_some_and(|w| !w.is_unit()) && !self.process.supports_weights() {
            return Err(BallocError::InvalidProcess(format!(
                "weighted balls are not supported for {}",
                self.process
            )));
        }
        Ok(())
    }

    pub fn build_dist(&self) -> Result<SamplingDistribution> {
        DistSpec::parse(&self.dist)?.build(self.n)
    }

    pub fn build_weights(&self) -> Result<Option<WeightDistribution>> {
        self.weights.as_deref().map(|s| WeightSpec::parse(s)?.build()).transpose()
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_trial_seed(self.master_seed, trial as u64)
    }

    /// Per-trial simulation settings, sharing an already built distribution.
    pub fn process_config(
        &self,
        trial: usize,
        dist: &SamplingDistribution,
        weights: Option<&WeightDistribution>,
    ) -> ProcessConfig {
        ProcessConfig {
            trial,
            cadence: self.cadence,
            weights: weights.cloned(),
            full_trace: self.full_trace,
            gamma_alpha: self.gamma_alpha,
            record_loads: self.record_loads,
            ..ProcessConfig::new(self.process, dist.clone(), self.m, self.trial_seed(trial))
        }
    }

    /// SHA-256 of the canonical JSON form with the output path cleared.
    pub fn hash(&self) -> String {
        let canonical = Self { output: PathBuf::new(), ..self.clone() };
        let json = serde_json::to_string(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// `output/<first 16 hex digits of the hash>`.
    pub fn run_dir(&self) -> PathBuf {
        self.output.join(&self.hash()[..16])
    }
}
