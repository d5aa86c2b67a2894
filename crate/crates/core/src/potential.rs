//! Potential functions evaluated on normalized loads.
//!
//! All functions are permutation invariant, so they accept any slice of
//! normalized loads (sorted or not). An exponent above [`EXP_CAP`] makes the
//! result `f64::INFINITY` instead of a silently saturated value.

use serde::{Deserialize, Serialize};

use crate::error::{BallocError, Result};
use crate::load::{normalized_value, Load, LoadVector, NormalizedLoads};

pub const EXP_CAP: f64 = 700.0;

/// Ratio α₁ / α₂ between the two layered smoothing parameters.
pub const ALPHA_RATIO: f64 = 84.0;

impl AsRef<[f64]> for NormalizedLoads {
    fn as_ref(&self) -> &[f64] {
        self.as_slice()
    }
}

#[inline]
fn capped_exp(x: f64) -> Option<f64> {
    (x <= EXP_CAP).then(|| x.exp())
}

fn sum_exps(exponents: impl Iterator<Item = f64>) -> f64 {
    let mut total = 0.0;
    for x in exponents {
        match capped_exp(x) {
            Some(e) => total += e,
            None => return f64::INFINITY,
        }
    }
    total
}

/// Hyperbolic cosine potential Γ(α) = Σ e^{α yᵢ} + e^{-α yᵢ}.
pub fn gamma(y: impl AsRef<[f64]>, alpha: f64) -> f64 {
    let y = y.as_ref();
    sum_exps(y.iter().map(|&v| alpha * v)) + sum_exps(y.iter().map(|&v| -alpha * v))
}

/// Overload part Φ(α) = Σ e^{α yᵢ}.
pub fn gamma_overload(y: impl AsRef<[f64]>, alpha: f64) -> f64 {
    sum_exps(y.as_ref().iter().map(|&v| alpha * v))
}

/// Underload part Ψ(α) = Σ e^{-α yᵢ}.
pub fn gamma_underload(y: impl AsRef<[f64]>, alpha: f64) -> f64 {
    sum_exps(y.as_ref().iter().map(|&v| -alpha * v))
}

/// Γ(α) straight from a load vector, skipping the sort.
pub fn gamma_from_loads<L: Load>(lv: &LoadVector<L>, alpha: f64) -> f64 {
    let total = lv.total().to_f64();
    let n = lv.n();
    let mut acc = 0.0;
    for x in lv.loads() {
        let y = normalized_value(x.to_f64(), total, n);
        match (capped_exp(alpha * y), capped_exp(-alpha * y)) {
            (Some(a), Some(b)) => acc += a + b,
            _ => return f64::INFINITY,
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstantMode {
    /// Constants fixed by the layered-induction schedule.
    Theoretical,
    /// User-chosen `v` and `α₂` for empirical measurements.
    Exploratory,
}

/// Smoothing parameters and offsets of the layered potentials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialConfig {
    pub mode: ConstantMode,
    pub alpha1: f64,
    pub alpha2: f64,
    pub v: f64,
    /// `C = max{6c, 6}`.
    pub big_c: f64,
    pub c: f64,
    pub b: f64,
    pub n: usize,
    /// `⌊log_v((α₂ / 2v) · ln n)⌋`; may be below 1 for small `n`.
    pub j_max: i64,
}

fn j_max_for(v: f64, alpha2: f64, n: usize) -> i64 {
    let inner = alpha2 / (2.0 * v) * (n as f64).ln();
    if inner <= 0.0 {
        return i64::MIN;
    }
    (inner.ln() / v.ln()).floor() as i64
}

fn check_alpha2(alpha2: f64) -> Result<()> {
    if !(alpha2 > 0.0 && alpha2 < 1.0) {
        return Err(BallocError::InvalidParameter(format!("alpha2 = {alpha2} outside (0, 1)")));
    }
    Ok(())
}

impl PotentialConfig {
    /// Schedule with `C = max{6c, 6}` and `v = max{ln(2Cb), 36b}`, without
    /// rejecting a short schedule. See [`layered_constants`].
    pub fn theoretical(b: f64, c: f64, alpha2: f64, n: usize) -> Result<Self> {
        check_alpha2(alpha2)?;
        if !(b >= 1.0) || !(c > 0.0) || n == 0 {
            return Err(BallocError::InvalidParameter(format!(
                "layered constants need b >= 1, c > 0, n >= 1 (b={b}, c={c}, n={n})"
            )));
        }
        let big_c = (6.0 * c).max(6.0);
        let v = (2.0 * big_c * b).ln().max(36.0 * b);
        Ok(Self {
            mode: ConstantMode::Theoretical,
            alpha1: ALPHA_RATIO * alpha2,
            alpha2,
            v,
            big_c,
            c,
            b,
            n,
            j_max: j_max_for(v, alpha2, n),
        })
    }

    /// Caller-chosen `v` and `α₂`; `c` defaults to 1 when not given.
    pub fn exploratory(v: f64, alpha2: f64, c: Option<f64>, n: usize) -> Result<Self> {
        check_alpha2(alpha2)?;
        if !(v > 1.0) || n == 0 {
            return Err(BallocError::InvalidParameter(format!("exploratory mode needs v > 1, got {v}")));
        }
        let c = c.unwrap_or(1.0);
        Ok(Self {
            mode: ConstantMode::Exploratory,
            alpha1: ALPHA_RATIO * alpha2,
            alpha2,
            v,
            big_c: (6.0 * c).max(6.0),
            c,
            b: 1.0,
            n,
            j_max: j_max_for(v, alpha2, n),
        })
    }

    /// Offset `z_j = (5v / α₂) · j`.
    pub fn z(&self, j: u32) -> f64 {
        5.0 * self.v / self.alpha2 * j as f64
    }

    /// Number of phases `k_j = ⌈e^{v^{j+1}} · ln³ n⌉`, capped at `⌊n^{1/7}⌋`
    /// and at least 1.
    pub fn k(&self, j: u32) -> u64 {
        let ln_n = (self.n as f64).ln();
        let cap = (self.n as f64).powf(1.0 / 7.0).floor().max(1.0);
        let raw = self.v.powi(j as i32 + 1).exp() * ln_n.powi(3);
        let k = if raw.is_finite() { raw.ceil().min(cap) } else { cap };
        (k as u64).max(1)
    }

    /// Substeps per phase of the folded process, `⌈v / α₂⌉`.
    pub fn phase_len(&self) -> u64 {
        (self.v / self.alpha2 - 1e-9).ceil().max(1.0) as u64
    }

    /// Light-sample threshold `z_{j-1} + 2v/α₂`.
    pub fn light_threshold(&self, j: u32) -> f64 {
        self.z(j.saturating_sub(1)) + 2.0 * self.v / self.alpha2
    }

    /// Folded Case-B allocation bound `z_{j-1} + 4v/α₂`.
    pub fn allocation_bound(&self, j: u32) -> f64 {
        self.z(j.saturating_sub(1)) + 4.0 * self.v / self.alpha2
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha2(self.alpha2)?;
        if ((self.alpha1 / self.alpha2) - ALPHA_RATIO).abs() > 1e-9 {
            return Err(BallocError::InvalidParameter(format!(
                "alpha1 / alpha2 = {} instead of {ALPHA_RATIO}",
                self.alpha1 / self.alpha2
            )));
        }
        Ok(())
    }
}

/// Theoretical constants, rejecting schedules with `j_max < 1`.
pub fn layered_constants(a: f64, b: f64, c: f64, alpha2: f64, n: usize) -> Result<PotentialConfig> {
    if !(a >= 1.0) {
        return Err(BallocError::InvalidParameter(format!("a = {a} must be >= 1")));
    }
    let cfg = PotentialConfig::theoretical(b, c, alpha2, n)?;
    if cfg.j_max < 1 {
        return Err(BallocError::ScheduleTooShort { j_max: cfg.j_max });
    }
    Ok(cfg)
}

fn layered(y: &[f64], smoothing: f64, j: u32, cfg: &PotentialConfig, partial: bool) -> f64 {
    let z = cfg.z(j);
    let scale = smoothing * cfg.v.powi(j as i32);
    let mut total = 0.0;
    for &yi in y {
        if partial && yi < z {
            continue;
        }
        match capped_exp(scale * (yi - z).max(0.0)) {
            Some(e) => total += e,
            None => return f64::INFINITY,
        }
    }
    total
}

/// Φ_j = Σ e^{α₂ vʲ (yᵢ - z_j)⁺}.
pub fn phi_j(y: impl AsRef<[f64]>, j: u32, cfg: &PotentialConfig) -> f64 {
    layered(y.as_ref(), cfg.alpha2, j, cfg, false)
}

/// Ψ_j = Σ e^{α₁ vʲ (yᵢ - z_j)⁺}.
pub fn psi_j(y: impl AsRef<[f64]>, j: u32, cfg: &PotentialConfig) -> f64 {
    layered(y.as_ref(), cfg.alpha1, j, cfg, false)
}

/// Φ̇_j: Φ_j restricted to bins with `yᵢ >= z_j`.
pub fn dot_phi_j(y: impl AsRef<[f64]>, j: u32, cfg: &PotentialConfig) -> f64 {
    layered(y.as_ref(), cfg.alpha2, j, cfg, true)
}

/// Ψ̇_j: Ψ_j restricted to bins with `yᵢ >= z_j`.
pub fn dot_psi_j(y: impl AsRef<[f64]>, j: u32, cfg: &PotentialConfig) -> f64 {
    layered(y.as_ref(), cfg.alpha1, j, cfg, true)
}
