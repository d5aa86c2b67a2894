//! Balanced-allocation processes with memory: simulation, potentials and
//! exact analytics.

pub mod analysis;
pub mod error;
pub mod harness;
pub mod load;
pub mod potential;
pub mod process;
pub mod sampling;
pub mod trace;

pub use error::{BallocError, Result};
pub use load::{gap, normalize, LoadVector, NormalizedLoads, Ordering};
pub use process::{run_process, Process, ProcessConfig, ProcessState};
pub use sampling::{SamplingDistribution, WeightDistribution};
pub use trace::{Cadence, Trace, TraceRecord};
