//! Per-trial seed derivation.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// 64-bit finalizer (splitmix64 output stage).
pub fn mix64(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x
}

/// `mix64(master ^ ((k + 1) * 0x9E3779B97F4A7C15))`.
pub fn derive_trial_seed(master_seed: u64, trial: u64) -> u64 {
    mix64(master_seed ^ trial.wrapping_add(1).wrapping_mul(GOLDEN))
}
