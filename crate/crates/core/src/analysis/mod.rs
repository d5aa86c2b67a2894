//! Exact, closed-form and Monte Carlo analytics for the Memory family.

pub mod condition;
pub mod drift;
pub mod fold;
pub mod majorization;
pub mod run_probs;

pub use condition::{c1_check, c1_max_eps, min_d_for_c1, step_delta, C1Family, C1Report};
pub use drift::{random_drift_states, verify_drop_exact, verify_drop_mc, DriftReport, DriftState, StateDrift};
pub use fold::{round_start_potentials, segment_folded, FoldCase, FoldedSegmentation, Round, Termination};
pub use majorization::{check_step_majorizes, majorization_check_step_vs_biased, random_biased, MajorizationReport};
pub use run_probs::{
    dchoice_allocation_vector, exact_run_probs, mc_run_probs, proxy_allocation_vector, rank_masses,
    twochoice_allocation_vector, weak_memory_run_probs_closed, weak_memory_run_probs_closed_for, AllocationVector,
    RunProbMatrix,
};
